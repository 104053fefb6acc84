"""Dataset construction: parameter sampling with label flattening, the
sequence and tree train sets, noise-ladder test suites, cross-system sets,
and dataset persistence.

Every recipe is a plain dict merged over documented defaults; the resolved
recipe plus the master seed reproduces the dataset bit-identically.  Item
counts (never lengths or depths) shrink by the ``scale`` divisor for desk
runs.

Seed scheme: item i owns the stream child_seed(master, i) (probe sets:
child_seed(master, class, i)).  Trajectory noise, the initial state, and
exponent labels hang off separate child streams of that item seed, with
the resample attempt folded in, so every stored seed regenerates its item
exactly and independently of batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import dynsys, lyapunov
from .dynsys import (KCCParams, SeqTrajectory, SystemSpec, TreeTrajectory,
                     child_seed)
from .errors import ConfigError, FormatError, InvalidInput

# Train and test parameter rectangles are disjoint along the coupling axis
# (transfer across the forcing-period axis turned out much harder than
# extrapolating in coupling strength, so the split is in k).  Both regions
# mix stable, quasi-periodic, and chaotic dynamics (~53/47 train after
# flattening, ~70/30 test); exponents span the contraction floor
# ln|alpha|/2 up to about +1.
TRAIN_K_RANGE = (0.5, 9.5)
TRAIN_TAU0_RANGE = (5.5, 21.0)
TEST_K_RANGE = (10.0, 16.0)
TEST_TAU0_RANGE = (5.5, 21.0)

# 11 levels: clean head plus a geometric ladder spanning the decades of
# interest (values in the observable's natural units).
NOISE_LADDER = [0.0] + [float(v) for v in np.logspace(-5, -1, 10)]

_PILOT_SIZE = 256
_CHUNK = 512
MAX_RESAMPLE = 10


@dataclass(frozen=True)
class ParamSampleConfig:
    """Rejection-sampling configuration for the KCC parameter sweep."""

    alpha: float = -0.5
    k_range: Tuple[float, float] = TRAIN_K_RANGE
    tau0_range: Tuple[float, float] = TRAIN_TAU0_RANGE
    lle_bounds: Tuple[float, float] = (-2.0, 2.0)
    bins: int = 40
    ergodicity_tol: float = 0.05
    t_osc: float = 24.0

    def __post_init__(self):
        if self.lle_bounds[0] >= self.lle_bounds[1]:
            raise ValueError("lle_bounds must be ordered")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")


@dataclass
class KCCSampleResult:
    """Accepted parameter draws plus the flattening histogram they filled."""

    params: List[KCCParams]
    labels: np.ndarray
    label_stds: np.ndarray
    label_seeds: List[int]
    bin_edges: np.ndarray
    n_attempts: int

    @property
    def items(self) -> List[Tuple[KCCParams, float]]:
        """(params, label) pairs, the sampler's advertised product."""
        return list(zip(self.params, self.labels.tolist()))


def _label_batch(specs: Sequence[SystemSpec], label_seeds: Sequence[int],
                 n_restarts: int, n_iter: int, n_transient: int):
    """Restart-averaged exponents for many specs: (mean, std, any_diverged)."""
    m = len(specs)
    lanes = [spec for spec in specs for _ in range(n_restarts)]
    seeds = [child_seed(label_seeds[j], r) for j in range(m) for r in range(n_restarts)]
    lam, conv, div = lyapunov.lle_tangent_batch(lanes, seeds, n_transient=n_transient,
                                                n_iter=n_iter)
    lam = lam.reshape(m, n_restarts)
    diverged = div.reshape(m, n_restarts).any(axis=1)
    with np.errstate(invalid="ignore"):
        return lam.mean(axis=1), lam.std(axis=1), diverged


def sample_kcc_params(cfg: ParamSampleConfig, n: int, seed: int = 0,
                      sigma: float = 0.0, n_restarts: int = 5,
                      label_n_iter: int = lyapunov.DEFAULT_N_ITER,
                      n_transient: int = dynsys.DEFAULT_TRANSIENT,
                      flatten: bool = True) -> KCCSampleResult:
    """Draw (k, tau0) pairs whose exponent labels form a flat histogram.

    Candidates are drawn uniformly from the configured rectangle; each is
    labeled by the restart-averaged tangent exponent and kept only when
    the restarts agree within the ergodicity tolerance (single attractor)
    and the label falls inside ``lle_bounds``.  A per-bin acceptance cap
    then flattens the label histogram over the reachable label range
    (found by a pilot draw; the dissipative floor ln|alpha|/2 makes part
    of the nominal bounds unreachable).
    """
    if n < 1:
        raise InvalidInput(f"n must be >= 1, got {n}")
    lo, hi = cfg.lle_bounds

    def candidates(start_idx: int, count: int):
        specs, label_seeds = [], []
        for i in range(count):
            item_seed = child_seed(seed, start_idx + i)
            rng = np.random.default_rng(item_seed)
            k = rng.uniform(*cfg.k_range)
            tau0 = rng.uniform(*cfg.tau0_range)
            specs.append(dynsys.kcc(cfg.alpha, k, tau0, cfg.t_osc, sigma))
            label_seeds.append(child_seed(item_seed, 1))
        return specs, label_seeds

    # pilot: locate the reachable label range inside the nominal bounds
    if flatten:
        specs, label_seeds = candidates(0, _PILOT_SIZE)
        mean, std, div = _label_batch(specs, label_seeds, n_restarts,
                                      min(label_n_iter, 4000), n_transient)
        ok = ~div & (std < cfg.ergodicity_tol) & (mean >= lo) & (mean <= hi)
        if ok.sum() < 8:
            raise ConfigError("pilot draw found almost no ergodic in-bound labels; "
                              "widen k_range/tau0_range or lle_bounds",
                              key="lle_bounds")
        flat_lo = max(lo, float(np.percentile(mean[ok], 2.0)))
        flat_hi = min(hi, float(np.percentile(mean[ok], 98.0)))
        if flat_hi <= flat_lo:
            flat_lo, flat_hi = lo, hi
        bin_edges = np.linspace(flat_lo, flat_hi, cfg.bins + 1)
    else:
        bin_edges = np.linspace(lo, hi, cfg.bins + 1)

    cap = math.ceil(n / cfg.bins) if flatten else n
    counts = np.zeros(cfg.bins, dtype=np.int64)
    out_params: List[KCCParams] = []
    out_labels: List[float] = []
    out_stds: List[float] = []
    out_seeds: List[int] = []
    attempts = 0
    next_idx = _PILOT_SIZE
    while len(out_params) < n:
        specs, label_seeds = candidates(next_idx, _CHUNK)
        next_idx += _CHUNK
        mean, std, div = _label_batch(specs, label_seeds, n_restarts,
                                      label_n_iter, n_transient)
        for j in range(_CHUNK):
            attempts += 1
            if div[j] or std[j] >= cfg.ergodicity_tol:
                continue
            lam = float(mean[j])
            if not lo <= lam <= hi:
                continue
            b = int(np.clip(np.searchsorted(bin_edges, lam, side="right") - 1,
                            0, cfg.bins - 1))
            if counts[b] >= cap:
                continue
            counts[b] += 1
            out_params.append(specs[j].params)
            out_labels.append(lam)
            out_stds.append(float(std[j]))
            out_seeds.append(label_seeds[j])
            if len(out_params) >= n:
                break
        if attempts >= 2000 and len(out_params) / attempts < 1e-3:
            raise ConfigError(
                f"acceptance rate {len(out_params)}/{attempts} below 1e-3; "
                "ranges too narrow for the requested label distribution",
                key="k_range")
        if attempts > max(500_000, 2000 * n):
            raise ConfigError("sampler exceeded its attempt budget", key="bins")
    return KCCSampleResult(params=out_params, labels=np.array(out_labels),
                           label_stds=np.array(out_stds), label_seeds=out_seeds,
                           bin_edges=bin_edges, n_attempts=attempts)


# ---------------------------------------------------------------------------
# Recipes.
# ---------------------------------------------------------------------------

DEFAULT_RECIPES: Dict[str, dict] = {
    "seq_train": {
        "n_items": 8000, "item_kind": "seq", "length": 250,
        "sigma": 0.001, "alpha": -0.5,
        "k_range": list(TRAIN_K_RANGE), "tau0_range": list(TRAIN_TAU0_RANGE),
        "t_osc": 24.0, "lle_bounds": [-2.0, 2.0], "bins": 40,
        "ergodicity_tol": 0.05, "n_transient": 500,
        "label_n_iter": 10000, "label_restarts": 5, "scale": 1,
    },
    "tree_train": {
        "n_items": 4000, "item_kind": "tree", "depth": 8,
        "sigma": 0.05, "alpha": -0.5,
        "k_range": list(TRAIN_K_RANGE), "tau0_range": list(TRAIN_TAU0_RANGE),
        "t_osc": 24.0, "lle_bounds": [-2.0, 2.0], "bins": 40,
        "ergodicity_tol": 0.05, "n_transient": 500,
        "label_n_iter": 10000, "label_restarts": 5, "scale": 1,
    },
    "test_suite": {
        "n_items": 2000, "item_kind": "seq", "length": 250, "depth": 8,
        "alpha": -0.5, "k_range": list(TEST_K_RANGE),
        "tau0_range": list(TEST_TAU0_RANGE), "t_osc": 24.0,
        "noise_levels": NOISE_LADDER, "n_transient": 500,
        "label_n_iter": 10000, "label_restarts": 5, "scale": 1,
    },
    "zmap_set": {
        "n_items": 2000, "item_kind": "seq", "length": 250, "depth": 8,
        "z": 2.0, "r_range": [0.25, 2.0], "sigma": 0.0, "n_transient": 500,
        "label_n_iter": 10000, "label_restarts": 5, "scale": 1,
    },
    "glm_set": {
        "n_items": 2000, "item_kind": "seq", "length": 250, "depth": 8,
        "z": 2, "r_range": [2.8, 4.0], "sigma": 0.0, "n_transient": 500,
        "label_n_iter": 10000, "label_restarts": 5, "scale": 1,
    },
    "probe_set": {
        "n_per_class": 5000, "item_kind": "seq", "length": 200, "depth": 8,
        "system": "zmap", "z_classes": [2, 3],
        "r_ranges": {"zmap": [0.5, 2.0], "glm2": [2.8, 4.0], "glm3": [1.8, 2.59]},
        "sigma": 0.0, "n_transient": 500, "scale": 1,
    },
}


@dataclass
class Dataset:
    """Homogeneous items plus labels plus the recipe that regenerates them."""

    kind: str
    items: List
    labels: np.ndarray
    label_kind: str  # "lle" or "class"
    recipe: dict
    seed: int
    label_stds: Optional[np.ndarray] = None
    label_seeds: Optional[List[int]] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if len(self.items) != self.labels.size:
            raise ValueError("items/labels length mismatch")


def resolve_recipe(kind: str, config: Optional[dict] = None) -> dict:
    if kind not in DEFAULT_RECIPES:
        raise ConfigError(f"unknown dataset kind {kind!r}", key="kind")
    recipe = dict(DEFAULT_RECIPES[kind])
    for key, value in (config or {}).items():
        if key not in recipe:
            raise ConfigError(f"unknown recipe key {key!r} for kind {kind!r}", key=key)
        recipe[key] = value
    return recipe


def _scaled(recipe: dict, key: str) -> int:
    scale = int(recipe.get("scale", 1))
    if scale < 1:
        raise ConfigError("scale must be >= 1", key="scale")
    return max(1, int(recipe[key]) // scale)


def _make_trajectories(specs: Sequence[SystemSpec], traj_seeds: Sequence[int],
                       recipe: dict):
    """Trajectories for prepared specs: x0 and noise each use a child
    stream of the item's trajectory seed."""
    item_kind = recipe.get("item_kind", "seq")
    n_transient = int(recipe["n_transient"])
    x0s = np.stack([dynsys.initial_state(sp, np.random.default_rng(child_seed(ts, 0)))
                    for sp, ts in zip(specs, traj_seeds)])
    noise_seeds = [child_seed(ts, 1) for ts in traj_seeds]
    if item_kind == "seq":
        values, diverged, _ = dynsys.generate_sequence_batch(
            specs, x0s, int(recipe["length"]), n_transient, noise_seeds)
    else:
        values, diverged, _ = dynsys.generate_tree_batch(
            specs, x0s, int(recipe["depth"]), noise_seeds, n_transient)
    return values, diverged


def regenerate_item(item, recipe: dict):
    """Rebuild one item's observable array from its stored spec and seed."""
    values, diverged = _make_trajectories([item.spec], [item.seed], recipe)
    if diverged[0]:
        raise InvalidInput("stored item diverged on regeneration")
    return values[0]


def _wrap_items(values: np.ndarray, specs, traj_seeds, recipe: dict,
                index: Sequence[int], out_items: List) -> None:
    item_kind = recipe.get("item_kind", "seq")
    for pos, i in enumerate(index):
        if item_kind == "seq":
            out_items[i] = SeqTrajectory(values[pos], specs[pos], traj_seeds[pos])
        else:
            present = np.ones(values.shape[1], dtype=bool)
            out_items[i] = TreeTrajectory(int(recipe["depth"]), values[pos],
                                          present, specs[pos], traj_seeds[pos])


def _draw_spec(kind: str, recipe: dict, rng: np.random.Generator,
               noise_level: Optional[float] = None, z_override=None) -> SystemSpec:
    if kind == "test_suite":
        sigma = noise_level if noise_level is not None else 0.0
        return dynsys.kcc(recipe["alpha"], rng.uniform(*recipe["k_range"]),
                          rng.uniform(*recipe["tau0_range"]), recipe["t_osc"], sigma)
    if kind == "zmap_set":
        return dynsys.zmap(rng.uniform(*recipe["r_range"]), recipe["z"],
                           recipe["sigma"])
    if kind == "glm_set":
        return dynsys.glm(rng.uniform(*recipe["r_range"]), int(recipe["z"]),
                          recipe["sigma"])
    if kind == "probe_set":
        z = z_override
        if recipe["system"] == "zmap":
            r = rng.uniform(*recipe["r_ranges"]["zmap"])
            return dynsys.zmap(r, float(z), recipe["sigma"])
        r = rng.uniform(*recipe["r_ranges"][f"glm{int(z)}"])
        return dynsys.glm(r, int(z), recipe["sigma"])
    raise ConfigError(f"unknown dataset kind {kind!r}", key="kind")


def _generate_items(kind: str, recipe: dict, item_seeds: Sequence[int],
                    specs: List[SystemSpec], with_labels: bool,
                    z_overrides: Optional[Sequence] = None):
    """Generate trajectories (and labels), resampling diverged items with
    fresh parameters up to MAX_RESAMPLE times."""
    n = len(specs)
    pending = list(range(n))
    items: List = [None] * n
    labels = np.full(n, np.nan)
    stds = np.full(n, np.nan)
    final_label_seeds: List[Optional[int]] = [None] * n

    for attempt in range(MAX_RESAMPLE + 1):
        if not pending:
            break
        sub_specs = [specs[i] for i in pending]
        traj_seeds = [child_seed(item_seeds[i], 10, attempt) for i in pending]
        values, diverged = _make_trajectories(sub_specs, traj_seeds, recipe)
        if with_labels:
            label_seeds = [child_seed(item_seeds[i], 11, attempt) for i in pending]
            lam, std, ldiv = _label_batch(sub_specs, label_seeds,
                                          int(recipe["label_restarts"]),
                                          int(recipe["label_n_iter"]),
                                          int(recipe["n_transient"]))
            diverged = diverged | ldiv
        good = [i for pos, i in enumerate(pending) if not diverged[pos]]
        good_pos = [pos for pos in range(len(pending)) if not diverged[pos]]
        _wrap_items(values[good_pos], [sub_specs[p] for p in good_pos],
                    [traj_seeds[p] for p in good_pos], recipe, good, items)
        if with_labels:
            for pos, i in zip(good_pos, good):
                labels[i] = lam[pos]
                stds[i] = std[pos]
                final_label_seeds[i] = label_seeds[pos]
        still_bad = [i for pos, i in enumerate(pending) if diverged[pos]]
        for i in still_bad:
            rng = np.random.default_rng(child_seed(item_seeds[i], 12, attempt))
            specs[i] = _draw_spec(
                kind, recipe, rng, noise_level=specs[i].sigma,
                z_override=z_overrides[i] if z_overrides is not None else None)
        pending = still_bad
    if pending:
        raise ConfigError(
            f"{len(pending)} items still diverged after {MAX_RESAMPLE} resamples",
            key="r_range" if "r_range" in recipe else "k_range")
    return items, labels, stds, final_label_seeds


def build_dataset(kind: str, config: Optional[dict] = None, seed: int = 0,
                  noise_level: Optional[float] = None) -> Dataset:
    """Build one dataset.  For ``test_suite`` pass the noise level
    explicitly or use :func:`build_noise_suite` for the whole ladder."""
    recipe = resolve_recipe(kind, config)
    if kind in ("seq_train", "tree_train"):
        return _build_kcc_labeled(kind, recipe, seed)

    if kind == "test_suite":
        level = float(noise_level) if noise_level is not None else 0.0
        n = _scaled(recipe, "n_items")
        item_seeds = [child_seed(seed, i) for i in range(n)]
        specs = [_draw_spec(kind, recipe, np.random.default_rng(s),
                            noise_level=level) for s in item_seeds]
        items, labels, stds, lseeds = _generate_items(kind, recipe, item_seeds,
                                                      specs, True)
        out = dict(recipe)
        out["noise_level"] = level
        return Dataset(kind=kind, items=items, labels=labels, label_kind="lle",
                       recipe=out, seed=seed, label_stds=stds, label_seeds=lseeds)

    if kind in ("zmap_set", "glm_set"):
        n = _scaled(recipe, "n_items")
        item_seeds = [child_seed(seed, i) for i in range(n)]
        specs = [_draw_spec(kind, recipe, np.random.default_rng(s))
                 for s in item_seeds]
        items, labels, stds, lseeds = _generate_items(kind, recipe, item_seeds,
                                                      specs, True)
        return Dataset(kind=kind, items=items, labels=labels, label_kind="lle",
                       recipe=recipe, seed=seed, label_stds=stds, label_seeds=lseeds)

    if kind == "probe_set":
        n = _scaled(recipe, "n_per_class")
        z_classes = recipe["z_classes"]
        if len(z_classes) != 2:
            raise ConfigError("probe_set needs exactly two classes", key="z_classes")
        item_seeds, specs, z_overrides, class_labels = [], [], [], []
        for ci, z in enumerate(z_classes):
            for i in range(n):
                s = child_seed(seed, ci, i)
                item_seeds.append(s)
                specs.append(_draw_spec(kind, recipe, np.random.default_rng(s),
                                        z_override=z))
                z_overrides.append(z)
                class_labels.append(float(ci))
        items, _, _, _ = _generate_items(kind, recipe, item_seeds, specs, False,
                                         z_overrides=z_overrides)
        return Dataset(kind=kind, items=items, labels=np.array(class_labels),
                       label_kind="class", recipe=recipe, seed=seed)

    raise ConfigError(f"unknown dataset kind {kind!r}", key="kind")


def _build_kcc_labeled(kind: str, recipe: dict, seed: int) -> Dataset:
    """seq_train / tree_train: flattened parameter sample, one trajectory each."""
    n = _scaled(recipe, "n_items")
    cfg = ParamSampleConfig(
        alpha=recipe["alpha"], k_range=tuple(recipe["k_range"]),
        tau0_range=tuple(recipe["tau0_range"]),
        lle_bounds=tuple(recipe["lle_bounds"]), bins=int(recipe["bins"]),
        ergodicity_tol=recipe["ergodicity_tol"], t_osc=recipe["t_osc"])
    sample = sample_kcc_params(cfg, n, seed=child_seed(seed, 0),
                               sigma=recipe["sigma"],
                               n_restarts=int(recipe["label_restarts"]),
                               label_n_iter=int(recipe["label_n_iter"]),
                               n_transient=int(recipe["n_transient"]))
    specs = [SystemSpec(dynsys.KCC, params) for params in sample.params]
    traj_seeds = [child_seed(seed, 1, i) for i in range(n)]
    values, diverged = _make_trajectories(specs, traj_seeds, recipe)
    if diverged.any():
        raise ConfigError("ergodic-region trajectory diverged unexpectedly")
    items: List = [None] * n
    _wrap_items(values, specs, traj_seeds, recipe, list(range(n)), items)
    return Dataset(kind=kind, items=items, labels=sample.labels.copy(),
                   label_kind="lle", recipe=recipe, seed=seed,
                   label_stds=sample.label_stds.copy(),
                   label_seeds=list(sample.label_seeds))


def build_noise_suite(config: Optional[dict] = None, seed: int = 0,
                      kind: str = "test_suite") -> Dict[float, Dataset]:
    """One test set per noise level, sharing parameter draws across levels."""
    recipe = resolve_recipe(kind, config)
    return {float(level): build_dataset(kind, config, seed=seed,
                                        noise_level=float(level))
            for level in recipe["noise_levels"]}


def recompute_label(ds: Dataset, index: int) -> float:
    """Recompute one item's exponent label from the stored recipe and label
    seed (the spot-check oracle for label integrity)."""
    if ds.label_kind != "lle" or ds.label_seeds is None:
        raise InvalidInput("dataset carries no recomputable exponent labels")
    spec = ds.items[index].spec
    mean, _, div = _label_batch([spec], [ds.label_seeds[index]],
                                int(ds.recipe["label_restarts"]),
                                int(ds.recipe["label_n_iter"]),
                                int(ds.recipe["n_transient"]))
    if div[0]:
        raise InvalidInput("label recomputation diverged")
    return float(mean[0])


# ---------------------------------------------------------------------------
# Persistence.
# ---------------------------------------------------------------------------


def save_dataset(ds: Dataset, path) -> None:
    item_entries = []
    payload_parts = []
    for idx, item in enumerate(ds.items):
        entry = {"family": item.spec.family,
                 "params": dynsys.params_to_dict(item.spec),
                 "seed": item.seed}
        if ds.label_seeds is not None and ds.label_seeds[idx] is not None:
            entry["label_seed"] = int(ds.label_seeds[idx])
        if isinstance(item, SeqTrajectory):
            entry["n"] = item.n
            payload_parts.append(item.values.astype("<f8").tobytes())
        else:
            entry["depth"] = item.depth
            if not item.present.all():
                entry["present"] = dynsys._pack_present(item.present).hex()
            payload_parts.append(item.values[item.present].astype("<f8").tobytes())
        item_entries.append(entry)
    manifest = {
        "format": "chaoskit-dataset", "version": 1,
        "kind": ds.kind, "recipe": ds.recipe, "seed": ds.seed,
        "label_kind": ds.label_kind,
        "labels": [float(v) for v in ds.labels],
        "label_stds": ([float(v) for v in ds.label_stds]
                       if ds.label_stds is not None else None),
        "items": item_entries,
    }
    dynsys.write_manifest_payload(path, manifest, b"".join(payload_parts))


def load_dataset(path) -> Dataset:
    manifest, payload = dynsys.read_manifest_payload(path)
    if manifest.get("format") != "chaoskit-dataset":
        raise FormatError(f"{path}: not a dataset file")
    items = []
    label_seeds = []
    offset = 0
    for entry in manifest["items"]:
        spec = dynsys.spec_from_dict(entry["family"], entry["params"])
        label_seeds.append(entry.get("label_seed"))
        if "n" in entry:
            n = int(entry["n"])
            chunk = payload[offset:offset + 8 * n]
            if len(chunk) != 8 * n:
                raise FormatError(f"{path}: truncated item payload")
            offset += 8 * n
            items.append(SeqTrajectory(np.frombuffer(chunk, dtype="<f8"),
                                       spec, int(entry["seed"])))
        else:
            depth = int(entry["depth"])
            n_slots = 2 ** depth - 1
            if "present" in entry:
                present = dynsys._unpack_present(bytes.fromhex(entry["present"]),
                                                 n_slots)
            else:
                present = np.ones(n_slots, dtype=bool)
            count = int(present.sum())
            chunk = payload[offset:offset + 8 * count]
            if len(chunk) != 8 * count:
                raise FormatError(f"{path}: truncated item payload")
            offset += 8 * count
            values = np.full(n_slots, np.nan)
            values[present] = np.frombuffer(chunk, dtype="<f8")
            items.append(TreeTrajectory(depth, values, present, spec,
                                        int(entry["seed"])))
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing payload bytes")
    stds = manifest.get("label_stds")
    if all(s is None for s in label_seeds):
        label_seeds = None
    return Dataset(kind=manifest["kind"], items=items,
                   labels=np.array(manifest["labels"], dtype=np.float64),
                   label_kind=manifest["label_kind"], recipe=manifest["recipe"],
                   seed=int(manifest["seed"]),
                   label_stds=np.array(stds) if stds is not None else None,
                   label_seeds=label_seeds)
