"""Scoring and comparison harness: MCC, noise/length robustness curves,
and 2-D parameter-space prediction maps.

All methods are wrapped as estimators mapping one trajectory to a score
and a chaotic/stable verdict (score > 0 for exponent-scale methods, K >
0.5 for the zero-one test).  Ground truth labels a cell chaotic iff its
exponent is strictly positive; quasi-periodic exponents of exactly zero
count as stable.

Estimator failures never abort a sweep: a collapsed-separation verdict
(DegenerateSeries) is itself evidence of stability and is scored stable,
any other error marks the item misclassified and is logged in the cell.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import classical, data, dynsys, lyapunov, models
from .dynsys import SeqTrajectory, TreeTrajectory, child_seed
from .errors import ChaoskitError, ConfigError, DegenerateSeries, InvalidInput


def mcc(y_true, y_pred) -> float:
    """Matthews correlation of two binary label vectors.

    Any zero factor in the denominator yields 0 (a one-class predictor
    carries no more information than a coin toss).
    """
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.size == 0 or t.shape != p.shape:
        raise InvalidInput("mcc needs two equal-length non-empty label vectors")
    t = t > 0
    p = p > 0
    tp = int(np.sum(t & p))
    tn = int(np.sum(~t & ~p))
    fp = int(np.sum(~t & p))
    fn = int(np.sum(t & ~p))
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


@dataclass
class EvalCell:
    """Scores of one method on one test set."""

    method: str
    noise: float
    length: Optional[int]
    n_items: int
    tp: int
    tn: int
    fp: int
    fn: int
    mcc: float
    rmse: Optional[float]
    n_failed: int = 0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("method", "noise", "length", "n_items", "tp", "tn", "fp", "fn",
                 "mcc", "rmse", "n_failed")}


@dataclass
class EvalReport:
    cells: List[EvalCell] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_text_table(self) -> str:
        header = f"{'method':<12} {'noise':>10} {'length':>7} {'n':>6} " \
                 f"{'TP':>5} {'TN':>5} {'FP':>5} {'FN':>5} {'MCC':>7} " \
                 f"{'RMSE':>8} {'fail':>5}"
        lines = [header, "-" * len(header)]
        for c in self.cells:
            rmse = f"{c.rmse:8.4f}" if c.rmse is not None else "       -"
            length = f"{c.length:7d}" if c.length is not None else "      -"
            lines.append(f"{c.method:<12} {c.noise:>10.2e} {length} {c.n_items:>6d} "
                         f"{c.tp:>5d} {c.tn:>5d} {c.fp:>5d} {c.fn:>5d} "
                         f"{c.mcc:>7.3f} {rmse} {c.n_failed:>5d}")
        return "\n".join(lines)

    def save(self, path) -> None:
        doc = {"format": "chaoskit-report", "version": 1, "meta": self.meta,
               "cells": [c.as_dict() for c in self.cells]}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(cells=[EvalCell(**c) for c in doc["cells"]], meta=doc["meta"])


# ---------------------------------------------------------------------------
# Estimators.
# ---------------------------------------------------------------------------


class RosensteinEstimator:
    lam_scale = True

    def __init__(self, params: Optional[classical.RosensteinParams] = None,
                 threshold: float = 0.0):
        self.name = "rosenstein"
        self.params = params or classical.RosensteinParams()
        self.threshold = threshold

    def predict(self, item, seed: int = 0) -> Tuple[float, bool]:
        res = classical.rosenstein(item, self.params)
        return res.lam, res.lam > self.threshold


class ZeroOneEstimator:
    lam_scale = False

    def __init__(self, params: Optional[classical.ZeroOneParams] = None,
                 seed: int = 0, threshold: float = 0.5):
        self.name = "zeroone"
        self.params = params or classical.ZeroOneParams()
        self.seed = seed
        self.threshold = threshold

    def predict(self, item, seed: int = 0) -> Tuple[float, bool]:
        res = classical.zero_one(item, self.params, seed=child_seed(self.seed, seed))
        return res.K, res.K > self.threshold


class ModelEstimator:
    lam_scale = True

    def __init__(self, model, name: str = "nn", threshold: float = 0.0):
        self.name = name
        self.model = model
        self.threshold = threshold

    def predict(self, item, seed: int = 0) -> Tuple[float, bool]:
        if isinstance(self.model, models.TreeRegressor):
            lam = models.tree_forward(self.model, item)
        else:
            lam, _ = models.seq_forward(self.model, item)
        return lam, lam > self.threshold

    def predict_batch(self, items, truncate: Optional[int] = None) -> np.ndarray:
        if isinstance(self.model, models.TreeRegressor):
            lam, _ = models.tree_forward_batch(self.model, list(items))
            return lam
        values = np.stack([np.asarray(it.values, dtype=np.float64) for it in items])
        if truncate is not None:
            values = values[:, :truncate]
        lam, _ = models.seq_forward_batch(self.model, values)
        return lam


class TangentOracle:
    """Recomputes ground truth from each item's generator spec: the
    reference estimator for harness self-checks."""

    lam_scale = True

    def __init__(self, n_iter: int = 4000, n_restarts: int = 3):
        self.name = "tangent"
        self.n_iter = n_iter
        self.n_restarts = n_restarts

    def predict(self, item, seed: int = 0) -> Tuple[float, bool]:
        res = lyapunov.lle_tangent_restarts(item.spec, n_restarts=self.n_restarts,
                                            n_iter=self.n_iter, seed=seed)
        return res.lam, res.lam > 0.0


def make_estimator(name: str, model=None, rosenstein_params=None,
                   zero_one_params=None, seed: int = 0,
                   lam_threshold: float = 0.0, k_threshold: float = 0.5):
    if name == "rosenstein":
        return RosensteinEstimator(rosenstein_params, threshold=lam_threshold)
    if name == "zeroone":
        return ZeroOneEstimator(zero_one_params, seed=seed, threshold=k_threshold)
    if name == "nn":
        if model is None:
            raise ConfigError("estimator 'nn' needs a model", key="model")
        return ModelEstimator(model, threshold=lam_threshold)
    if name == "tangent":
        return TangentOracle()
    raise ConfigError(f"unknown estimator {name!r}", key="method")


def _truncated(item, truncate: Optional[int]):
    if truncate is None or not isinstance(item, SeqTrajectory):
        return item
    if truncate < 1:
        raise ConfigError("length truncation must be >= 1", key="lengths")
    return SeqTrajectory(item.values[:truncate], item.spec, item.seed)


def evaluate_dataset(estimator, ds: data.Dataset, threads: int = 1,
                     truncate: Optional[int] = None):
    """Apply one estimator to every item of a labeled dataset.

    Returns (EvalCell, scores) with scores nan for failed items.  Items on
    which the estimator fails count as misclassified; a DegenerateSeries
    verdict counts as a stable prediction (identically collapsing
    separations are direct evidence of stability).
    """
    if ds.label_kind != "lle":
        raise InvalidInput("evaluation needs exponent-labeled datasets")
    n = len(ds.items)
    truth = ds.labels > 0.0
    scores = np.full(n, np.nan)
    pred = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)

    if isinstance(estimator, ModelEstimator):
        scores = estimator.predict_batch(ds.items, truncate=truncate)
        pred = scores > estimator.threshold
    else:
        def run(i):
            item = _truncated(ds.items[i], truncate)
            try:
                return estimator.predict(item, seed=i)
            except DegenerateSeries:
                return (math.nan, False)
            except ChaoskitError:
                return None

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run, range(n)))
        else:
            results = [run(i) for i in range(n)]
        for i, res in enumerate(results):
            if res is None:
                failed[i] = True
                pred[i] = ~truth[i]  # counted as misclassified
            else:
                scores[i], pred[i] = res

    rmse = None
    if getattr(estimator, "lam_scale", False):
        ok = np.isfinite(scores)
        if ok.any():
            rmse = float(np.sqrt(np.mean((scores[ok] - ds.labels[ok]) ** 2)))
    tp = int(np.sum(truth & pred))
    tn = int(np.sum(~truth & ~pred))
    fp = int(np.sum(~truth & pred))
    fn = int(np.sum(truth & ~pred))
    cell = EvalCell(method=estimator.name,
                    noise=float(ds.recipe.get("noise_level",
                                              ds.recipe.get("sigma", 0.0))),
                    length=truncate, n_items=n, tp=tp, tn=tn, fp=fp, fn=fn,
                    mcc=mcc(truth, pred), rmse=rmse, n_failed=int(failed.sum()))
    return cell, scores


def robustness_curve(estimator, suites: Dict[float, data.Dataset],
                     lengths: Optional[Sequence[int]] = None,
                     threads: int = 1) -> EvalReport:
    """MCC of one estimator across a noise ladder (and optional length grid)."""
    report = EvalReport(meta={"estimator": estimator.name, "mode": "dynamical"})
    for noise in sorted(suites):
        ds = suites[noise]
        for length in (lengths or [None]):
            cell, _ = evaluate_dataset(estimator, ds, threads=threads,
                                       truncate=length)
            cell.noise = float(noise)
            report.cells.append(cell)
    return report


def measurement_curve(estimator, ds: data.Dataset, levels: Sequence[float],
                      seed: int = 0, lengths: Optional[Sequence[int]] = None,
                      threads: int = 1) -> EvalReport:
    """Robustness against observation noise: the clean suite is re-used and
    per-item Gaussian measurement noise is added at each level."""
    report = EvalReport(meta={"estimator": estimator.name, "mode": "measurement"})
    for level in levels:
        noisy_items = [dynsys.add_measurement_noise(item, level,
                                                    seed=child_seed(seed, i))
                       for i, item in enumerate(ds.items)]
        noisy = data.Dataset(kind=ds.kind, items=noisy_items, labels=ds.labels,
                             label_kind=ds.label_kind, recipe=dict(ds.recipe),
                             seed=ds.seed, label_stds=ds.label_stds,
                             label_seeds=ds.label_seeds)
        for length in (lengths or [None]):
            cell, _ = evaluate_dataset(estimator, noisy, threads=threads,
                                       truncate=length)
            cell.noise = float(level)
            report.cells.append(cell)
    return report


# ---------------------------------------------------------------------------
# 2-D parameter-space maps.
# ---------------------------------------------------------------------------

DEFAULT_SWEEP = {
    "k_range": [0.0, 14.0], "tau0_range": [5.5, 21.0], "nk": 20, "ntau": 20,
    "alpha": -0.5, "t_osc": 24.0, "sigma": 0.0, "item_kind": "seq",
    "length": 250, "depth": 8, "n_transient": 500,
    "label_n_iter": 10000, "label_restarts": 5,
}


@dataclass
class SweepGrid:
    """Aligned ground-truth and prediction grids over a KCC parameter slice."""

    k_values: np.ndarray
    tau0_values: np.ndarray
    lam_true: np.ndarray  # (nk, ntau), nan for diverged cells
    lam_hat: np.ndarray
    method: str
    noise: float
    config: dict
    seed: int

    def sign_mcc(self) -> float:
        ok = np.isfinite(self.lam_true) & np.isfinite(self.lam_hat)
        return mcc(self.lam_true[ok] > 0, self.lam_hat[ok] > 0)

    def to_tsv(self) -> str:
        lines = ["k\ttau0\tlam_true\tlam_hat"]
        for i, k in enumerate(self.k_values):
            for j, tau in enumerate(self.tau0_values):
                lines.append(f"{k!r}\t{tau!r}\t{self.lam_true[i, j]!r}"
                             f"\t{self.lam_hat[i, j]!r}")
        return "\n".join(lines) + "\n"


def sweep_map(estimator, config: Optional[dict] = None, seed: int = 0,
              threads: int = 1) -> SweepGrid:
    """Ground truth and one prediction per cell of a (k, tau0) grid."""
    cfg = dict(DEFAULT_SWEEP)
    for key, value in (config or {}).items():
        if key not in cfg:
            raise ConfigError(f"unknown sweep key {key!r}", key=key)
        cfg[key] = value
    nk, ntau = int(cfg["nk"]), int(cfg["ntau"])
    if nk < 2 or ntau < 2:
        raise ConfigError("sweep grid must be at least 2x2", key="nk")
    k_values = np.linspace(*cfg["k_range"], nk)
    tau0_values = np.linspace(*cfg["tau0_range"], ntau)

    specs, item_seeds = [], []
    for i in range(nk):
        for j in range(ntau):
            specs.append(dynsys.kcc(cfg["alpha"], float(k_values[i]),
                                    float(tau0_values[j]), cfg["t_osc"],
                                    cfg["sigma"]))
            item_seeds.append(child_seed(seed, i, j))

    label_seeds = [child_seed(s, 11) for s in item_seeds]
    lam_true, _, div = data._label_batch(specs, label_seeds,
                                         int(cfg["label_restarts"]),
                                         int(cfg["label_n_iter"]),
                                         int(cfg["n_transient"]))
    lam_true = np.where(div, np.nan, lam_true)

    recipe = {"item_kind": cfg["item_kind"], "length": cfg["length"],
              "depth": cfg["depth"], "n_transient": cfg["n_transient"]}
    values, gen_div = data._make_trajectories(specs, item_seeds, recipe)
    lam_hat = np.full(len(specs), np.nan)
    items = []
    for idx in range(len(specs)):
        if gen_div[idx]:
            items.append(None)
            continue
        if cfg["item_kind"] == "seq":
            items.append(SeqTrajectory(values[idx], specs[idx], item_seeds[idx]))
        else:
            present = np.ones(values.shape[1], dtype=bool)
            items.append(TreeTrajectory(int(cfg["depth"]), values[idx], present,
                                        specs[idx], item_seeds[idx]))

    if isinstance(estimator, ModelEstimator):
        good = [i for i, it in enumerate(items) if it is not None]
        if good:
            lam_hat[good] = estimator.predict_batch([items[i] for i in good])
    else:
        def run(idx):
            if items[idx] is None:
                return math.nan
            try:
                return estimator.predict(items[idx], seed=idx)[0]
            except DegenerateSeries:
                return -0.0
            except ChaoskitError:
                return math.nan

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                lam_hat[:] = list(pool.map(run, range(len(specs))))
        else:
            lam_hat[:] = [run(idx) for idx in range(len(specs))]

    return SweepGrid(k_values=k_values, tau0_values=tau0_values,
                     lam_true=lam_true.reshape(nk, ntau),
                     lam_hat=lam_hat.reshape(nk, ntau),
                     method=estimator.name, noise=float(cfg["sigma"]),
                     config=cfg, seed=seed)


def save_grid(grid: SweepGrid, path_prefix) -> None:
    """Binary grid file (manifest + float64 payload) plus a plot-ready TSV."""
    manifest = {
        "format": "chaoskit-grid", "version": 1, "method": grid.method,
        "noise": grid.noise, "config": grid.config, "seed": grid.seed,
        "nk": int(grid.k_values.size), "ntau": int(grid.tau0_values.size),
    }
    payload = b"".join(arr.astype("<f8").tobytes() for arr in
                       (grid.k_values, grid.tau0_values,
                        grid.lam_true.ravel(), grid.lam_hat.ravel()))
    dynsys.write_manifest_payload(f"{path_prefix}.grid", manifest, payload)
    with open(f"{path_prefix}.tsv", "w", encoding="utf-8") as fh:
        fh.write(grid.to_tsv())


def load_grid(path):
    manifest, payload = dynsys.read_manifest_payload(path)
    if manifest.get("format") != "chaoskit-grid":
        raise InvalidInput(f"{path}: not a grid file")
    nk, ntau = int(manifest["nk"]), int(manifest["ntau"])
    expected = 8 * (nk + ntau + 2 * nk * ntau)
    if len(payload) != expected:
        raise InvalidInput(f"{path}: payload holds {len(payload)} bytes, "
                           f"expected {expected}")
    flat = np.frombuffer(payload, dtype="<f8")
    k_values = flat[:nk].copy()
    tau0_values = flat[nk:nk + ntau].copy()
    rest = flat[nk + ntau:]
    lam_true = rest[:nk * ntau].reshape(nk, ntau).copy()
    lam_hat = rest[nk * ntau:].reshape(nk, ntau).copy()
    return SweepGrid(k_values=k_values, tau0_values=tau0_values,
                     lam_true=lam_true, lam_hat=lam_hat,
                     method=manifest["method"], noise=manifest["noise"],
                     config=manifest["config"], seed=int(manifest["seed"]))
