"""Task models: sequence exponent regressor, tree exponent regressor, and
the universality-class probe, plus their training loops.

Both regressors share one code path: a level-batched graph builder that
unrolls the GRU over sequences (a chain is a degenerate tree) or over
arbitrary, possibly pruned, binary trees.  Inputs are z-scored per
trajectory, which makes predictions invariant to positive affine
rescaling of the raw observable and is what lets a model trained on one
system read trajectories from another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from . import neural
from .dynsys import SeqTrajectory, TreeTrajectory, child_seed
from .errors import ConfigError, InvalidInput, NumericalError
from .neural import DenseWeights, GRUWeights

DEFAULT_HIDDEN = 64
DEFAULT_EMBED = 32


@dataclass
class SeqRegressor:
    """GRU over the normalized series; a linear head reads the exponent
    off the final hidden state."""

    gru: GRUWeights
    head: DenseWeights

    @classmethod
    def create(cls, hidden_size: int = DEFAULT_HIDDEN, input_size: int = 1,
               seed: int = 0) -> "SeqRegressor":
        rng = np.random.default_rng(seed)
        return cls(gru=neural.init_gru(input_size, hidden_size, rng),
                   head=neural.init_dense(hidden_size, 1, "identity", rng))

    @property
    def hidden_size(self) -> int:
        return self.gru.hidden_size

    def param_dict(self) -> Dict[str, np.ndarray]:
        params = neural.gru_param_dict(self.gru)
        params.update(neural.dense_param_dict(self.head, "head."))
        return params

    @classmethod
    def from_param_dict(cls, params: Dict[str, np.ndarray]) -> "SeqRegressor":
        return cls(gru=neural.gru_from_params(params),
                   head=neural.dense_from_params(params, "head.", "identity"))


@dataclass
class TreeRegressor:
    """Shared GRU over every tree edge; leaf hidden states are embedded,
    mean-pooled, and mapped to the exponent."""

    gru: GRUWeights
    f1: DenseWeights
    f2: DenseWeights
    g: DenseWeights

    @classmethod
    def create(cls, hidden_size: int = DEFAULT_HIDDEN, embed_size: int = DEFAULT_EMBED,
               input_size: int = 1, seed: int = 0) -> "TreeRegressor":
        rng = np.random.default_rng(seed)
        return cls(gru=neural.init_gru(input_size, hidden_size, rng),
                   f1=neural.init_dense(hidden_size, embed_size, "relu", rng),
                   f2=neural.init_dense(embed_size, embed_size, "relu", rng),
                   g=neural.init_dense(embed_size, 1, "identity", rng))

    @property
    def hidden_size(self) -> int:
        return self.gru.hidden_size

    @property
    def embed_size(self) -> int:
        return self.f1.W.shape[0]

    def param_dict(self) -> Dict[str, np.ndarray]:
        params = neural.gru_param_dict(self.gru)
        params.update(neural.dense_param_dict(self.f1, "f1."))
        params.update(neural.dense_param_dict(self.f2, "f2."))
        params.update(neural.dense_param_dict(self.g, "g."))
        return params

    @classmethod
    def from_param_dict(cls, params: Dict[str, np.ndarray]) -> "TreeRegressor":
        return cls(gru=neural.gru_from_params(params),
                   f1=neural.dense_from_params(params, "f1.", "relu"),
                   f2=neural.dense_from_params(params, "f2.", "relu"),
                   g=neural.dense_from_params(params, "g.", "identity"))


@dataclass
class UCProbe:
    """Two-layer classifier reading universality class from donor features."""

    l1: DenseWeights
    l2: DenseWeights

    @classmethod
    def create(cls, input_size: int, hidden_size: int = 32, seed: int = 0) -> "UCProbe":
        rng = np.random.default_rng(seed)
        return cls(l1=neural.init_dense(input_size, hidden_size, "relu", rng),
                   l2=neural.init_dense(hidden_size, 1, "sigmoid", rng))

    def param_dict(self) -> Dict[str, np.ndarray]:
        params = neural.dense_param_dict(self.l1, "l1.")
        params.update(neural.dense_param_dict(self.l2, "l2."))
        return params

    @classmethod
    def from_param_dict(cls, params: Dict[str, np.ndarray]) -> "UCProbe":
        return cls(l1=neural.dense_from_params(params, "l1.", "relu"),
                   l2=neural.dense_from_params(params, "l2.", "sigmoid"))


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    lr: float = 5e-4
    epochs: int = 200
    l2: float = 3e-4
    recurrent_dropout_p: float = 0.3
    seed: int = 0
    shuffle: bool = True
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


def normalize_values(values: np.ndarray) -> np.ndarray:
    """Per-trajectory z-score; a zero-variance input keeps std = 1."""
    values = np.asarray(values, dtype=np.float64)
    std = values.std()
    if std == 0.0 or not np.isfinite(std):
        std = 1.0
    return (values - values.mean()) / std


# ---------------------------------------------------------------------------
# Level-batched forward graphs.
# ---------------------------------------------------------------------------


def _seq_graph(params: Dict[str, ad.Tensor], batch: np.ndarray,
               masks: Optional[np.ndarray]):
    """Unroll the GRU over a (B, L) batch of normalized values.

    Returns (lam_hat (B,1), h_n (B, hidden)) as tape Tensors.
    """
    n_batch, length = batch.shape
    hidden = params["gru.b_z"].data.size
    h = ad.Tensor(np.zeros((n_batch, hidden)))
    mask_t = ad.Tensor(masks) if masks is not None else None
    for t in range(length):
        x_t = ad.Tensor(batch[:, t:t + 1])
        h = neural.gru_cell_t(x_t, h, params, mask_t)
    lam = ad.linear(h, params["head.W"], params["head.b"])
    return lam, h


@dataclass
class _TreeLayout:
    """Level-ordered node bookkeeping for a batch of (possibly pruned) trees."""

    level_values: List[np.ndarray]  # per level: (n_nodes, 1) observables
    level_parent_row: List[np.ndarray]  # per level > 0: row into previous level
    level_tree_idx: List[np.ndarray]  # per level: owning tree of each row
    leaf_rows: List[List[Tuple[int, int]]]  # per tree: (level, row) of each leaf
    n_trees: int


def _layout_trees(trees: Sequence[TreeTrajectory]) -> _TreeLayout:
    level_values: List[List[float]] = []
    level_parent: List[List[int]] = []
    level_tree: List[List[int]] = []
    leaf_rows: List[List[Tuple[int, int]]] = [[] for _ in trees]
    row_of: List[Dict[int, int]] = []  # per level: slot-key -> row

    max_depth = max(t.depth for t in trees)
    for level in range(max_depth):
        level_values.append([])
        level_parent.append([])
        level_tree.append([])
        row_of.append({})

    for ti, tree in enumerate(trees):
        values = normalize_values(tree.values[tree.present])
        full = np.full(tree.values.shape, np.nan)
        full[tree.present] = values
        leaves = tree.leaf_mask()
        for slot in range(tree.values.size):
            if not tree.present[slot]:
                continue
            level = int(math.floor(math.log2(slot + 1)))
            key = (ti << 32) | slot
            row = len(level_values[level])
            row_of[level][key] = row
            level_values[level].append(full[slot])
            level_tree[level].append(ti)
            if level > 0:
                parent_key = (ti << 32) | ((slot - 1) // 2)
                level_parent[level].append(row_of[level - 1][parent_key])
            if leaves[slot]:
                leaf_rows[ti].append((level, row))

    return _TreeLayout(
        level_values=[np.asarray(v)[:, None] for v in level_values],
        level_parent_row=[np.asarray(p, dtype=np.int64) for p in level_parent],
        level_tree_idx=[np.asarray(t, dtype=np.int64) for t in level_tree],
        leaf_rows=leaf_rows,
        n_trees=len(trees),
    )


def _tree_graph(params: Dict[str, ad.Tensor], layout: _TreeLayout,
                masks: Optional[np.ndarray]):
    """Hidden states level by level, then leaf embeddings mean-pooled per tree.

    Returns (lam_hat (B,1), pooled (B, embed)) as tape Tensors.
    """
    hidden = params["gru.b_z"].data.size
    level_h: List[ad.Tensor] = []
    for level, values in enumerate(layout.level_values):
        if values.size == 0:
            level_h.append(None)
            continue
        x_t = ad.Tensor(values)
        if level == 0:
            h_parent = ad.Tensor(np.zeros((values.shape[0], hidden)))
        else:
            h_parent = ad.take(level_h[level - 1], layout.level_parent_row[level])
        mask_t = ad.Tensor(masks[layout.level_tree_idx[level]]) \
            if masks is not None else None
        level_h.append(neural.gru_cell_t(x_t, h_parent, params, mask_t))

    # embed every level's rows once, then gather leaf rows per tree
    level_z: List[Optional[ad.Tensor]] = []
    for h in level_h:
        if h is None:
            level_z.append(None)
            continue
        z = neural.dense_t(h, params, "f1.", "relu")
        level_z.append(neural.dense_t(z, params, "f2.", "relu"))

    embed = params["f1.b"].data.size
    pooled_rows = []
    for ti in range(layout.n_trees):
        rows = layout.leaf_rows[ti]
        by_level: Dict[int, List[int]] = {}
        for level, row in rows:
            by_level.setdefault(level, []).append(row)
        parts = []
        for level, rlist in sorted(by_level.items()):
            parts.append(ad.take(level_z[level], np.asarray(rlist, dtype=np.int64)))
        if len(parts) == 1:
            stacked = parts[0]
        else:
            stacked = _concat_rows(parts)
        pooled_rows.append(ad.mean_axis(ad.reshape(stacked, (1, len(rows), embed)), 1))
    pooled = pooled_rows[0] if len(pooled_rows) == 1 else _concat_rows(pooled_rows)
    lam = ad.linear(pooled, params["g.W"], params["g.b"])
    return lam, pooled


def _concat_rows(parts: List[ad.Tensor]) -> ad.Tensor:
    out = ad.Tensor(np.concatenate([p.data for p in parts], axis=0), tuple(parts))
    sizes = [p.data.shape[0] for p in parts]

    def backward(g):
        offset = 0
        for p, size in zip(parts, sizes):
            ad._accum(p, g[offset:offset + size])
            offset += size

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Forward entry points.
# ---------------------------------------------------------------------------


def _as_tensor_params(params: Dict[str, np.ndarray]) -> Dict[str, ad.Tensor]:
    return {k: ad.Tensor(v) for k, v in params.items()}


def seq_forward(model: SeqRegressor, traj, training: bool = False,
                seed: int = 0, drop_p: float = 0.0):
    """Run one series; returns (lambda_hat, final hidden state)."""
    values = np.asarray(getattr(traj, "values", traj), dtype=np.float64)
    if values.ndim != 1 or values.size < 1:
        raise InvalidInput("seq_forward needs a non-empty 1-D series")
    lam, h = seq_forward_batch(model, values[None, :], training=training,
                               seed=seed, drop_p=drop_p)
    return float(lam[0]), h[0]


def seq_forward_batch(model: SeqRegressor, values: np.ndarray, training: bool = False,
                      seed: int = 0, drop_p: float = 0.0):
    """Run a (B, L) batch of raw series; returns (lam (B,), H (B, hidden))."""
    values = np.asarray(values, dtype=np.float64)
    batch = np.stack([normalize_values(row) for row in values])
    masks = None
    if training and drop_p > 0.0:
        rng = np.random.default_rng(seed)
        masks = np.stack([neural.make_recurrent_dropout_mask(model.hidden_size,
                                                             drop_p, rng)
                          for _ in range(batch.shape[0])])
    lam, h = _seq_graph(_as_tensor_params(model.param_dict()), batch, masks)
    return lam.data[:, 0].copy(), h.data.copy()


def tree_forward(model: TreeRegressor, tree: TreeTrajectory, training: bool = False,
                 seed: int = 0, drop_p: float = 0.0) -> float:
    """Predicted exponent for one (possibly pruned) tree."""
    lam, _ = tree_forward_batch(model, [tree], training=training, seed=seed,
                                drop_p=drop_p)
    return float(lam[0])


def tree_forward_batch(model: TreeRegressor, trees: Sequence[TreeTrajectory],
                       training: bool = False, seed: int = 0, drop_p: float = 0.0):
    """Batch of trees; returns (lam (B,), pooled leaf embeddings (B, embed))."""
    if not trees:
        raise InvalidInput("empty tree batch")
    layout = _layout_trees(trees)
    masks = None
    if training and drop_p > 0.0:
        rng = np.random.default_rng(seed)
        masks = np.stack([neural.make_recurrent_dropout_mask(model.hidden_size,
                                                             drop_p, rng)
                          for _ in range(len(trees))])
    lam, pooled = _tree_graph(_as_tensor_params(model.param_dict()), layout, masks)
    return lam.data[:, 0].copy(), pooled.data.copy()


def probe_forward(probe: UCProbe, features: np.ndarray) -> np.ndarray:
    """Class-1 probabilities for a (B, F) feature batch."""
    hidden = neural.dense_forward(np.atleast_2d(features), probe.l1)
    return neural.dense_forward(hidden, probe.l2)[:, 0]


def probe_extract(donor, traj) -> np.ndarray:
    """Donor representation of one trajectory: the final hidden state for a
    sequence donor, the mean-pooled leaf embedding for a tree donor."""
    if isinstance(donor, SeqRegressor):
        _, h = seq_forward(donor, traj)
        return h
    if isinstance(donor, TreeRegressor):
        if not isinstance(traj, TreeTrajectory):
            raise InvalidInput("tree donor needs a TreeTrajectory input")
        _, pooled = tree_forward_batch(donor, [traj])
        return pooled[0]
    raise InvalidInput(f"unknown donor type {type(donor).__name__}")


def probe_extract_batch(donor, items) -> np.ndarray:
    if isinstance(donor, SeqRegressor):
        values = np.stack([np.asarray(it.values, dtype=np.float64) for it in items])
        _, h = seq_forward_batch(donor, values)
        return h
    _, pooled = tree_forward_batch(donor, list(items))
    return pooled


# ---------------------------------------------------------------------------
# Training.
# ---------------------------------------------------------------------------


def _loss_graph_seq(params, batch, targets, masks, l2_unused=None):
    lam, _ = _seq_graph(params, batch, masks)
    return ad.mse_loss(ad.reshape(lam, (lam.data.shape[0],)), targets)


def _check_homogeneous_trees(items) -> int:
    depth = items[0].depth
    for tree in items:
        if tree.depth != depth:
            raise ConfigError("tree training needs a single common depth")
        if not tree.present.all():
            raise ConfigError("tree training expects complete trees")
    return depth


def train_regressor(kind: str, items: Sequence, labels: np.ndarray,
                    cfg: TrainConfig):
    """Mini-batch Adam on MSE with L2, seeded shuffling, 10% validation
    split, best-epoch checkpointing.

    Returns (model, history) where history carries per-epoch train/val MSE
    and the selected epoch.  A NumericalError mid-training aborts and
    returns the best checkpoint reached so far.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if len(items) == 0:
        raise ConfigError("empty training set")
    if not np.all(np.isfinite(labels)):
        raise ConfigError("labels must be finite")
    if kind == "seq":
        lengths = {it.values.size for it in items}
        if len(lengths) != 1:
            raise ConfigError("sequence training needs a single common length")
        data = np.stack([normalize_values(it.values) for it in items])
        model = SeqRegressor.create(seed=cfg.seed)
        layouts = None
    elif kind == "tree":
        _check_homogeneous_trees(items)
        data = None
        model = TreeRegressor.create(seed=cfg.seed)
        layouts = list(items)
    else:
        raise ConfigError(f"unknown regressor kind {kind!r}")

    params = model.param_dict()
    state = neural.AdamState.init(params, lr=cfg.lr, weight_decay=cfg.l2)

    n = len(items)
    split_rng = np.random.default_rng(child_seed(cfg.seed, 0))
    perm = split_rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n)) if n >= 10 else 0
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    def batch_loss_fn(idx, masks):
        targets = labels[idx]
        if kind == "seq":
            batch = data[idx]
            return lambda p: _loss_graph_seq(p, batch, targets, masks)
        layout = _layout_trees([layouts[i] for i in idx])

        def fn(p):
            lam, _ = _tree_graph(p, layout, masks)
            return ad.mse_loss(ad.reshape(lam, (lam.data.shape[0],)), targets)
        return fn

    def eval_mse(idx):
        if idx.size == 0:
            return math.nan
        if kind == "seq":
            lam, _ = _seq_graph(_as_tensor_params(params), data[idx], None)
        else:
            lam, _ = _tree_graph(_as_tensor_params(params),
                                 _layout_trees([layouts[i] for i in idx]), None)
        return float(np.mean((lam.data[:, 0] - labels[idx]) ** 2))

    history = {"train_mse": [], "val_mse": [], "best_epoch": -1, "aborted": False}
    best_params = {k: v.copy() for k, v in params.items()}
    best_score = math.inf
    hidden = model.hidden_size

    for epoch in range(cfg.epochs):
        epoch_rng = np.random.default_rng(child_seed(cfg.seed, 1 + epoch))
        order = epoch_rng.permutation(train_idx) if cfg.shuffle else train_idx
        epoch_loss = 0.0
        try:
            for start in range(0, order.size, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                masks = None
                if cfg.recurrent_dropout_p > 0.0:
                    masks = np.stack([neural.make_recurrent_dropout_mask(
                        hidden, cfg.recurrent_dropout_p, epoch_rng)
                        for _ in range(idx.size)])
                loss, grads = neural.compute_gradients(batch_loss_fn(idx, masks), params)
                neural.adam_step(params, grads, state)
                epoch_loss += loss * idx.size
        except NumericalError:
            history["aborted"] = True
            break
        history["train_mse"].append(epoch_loss / max(order.size, 1))
        val = eval_mse(val_idx)
        history["val_mse"].append(val)
        score = val if n_val > 0 else history["train_mse"][-1]
        if score < best_score:
            best_score = score
            best_params = {k: v.copy() for k, v in params.items()}
            history["best_epoch"] = epoch

    cls = SeqRegressor if kind == "seq" else TreeRegressor
    return cls.from_param_dict(best_params), history


def _check_balance(labels: np.ndarray, where: str) -> None:
    frac = float(np.mean(labels > 0.5))
    if not 0.4 <= frac <= 0.6:
        raise ConfigError(f"{where} classes imbalanced ({frac:.2f} positive); "
                          "the recipe requires balance within 60/40")


def train_probe(features: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
                input_size: Optional[int] = None) -> UCProbe:
    """Fit the probe with binary cross-entropy on logits."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    _check_balance(labels, "probe train set")
    probe = UCProbe.create(input_size or features.shape[1], seed=cfg.seed)
    params = probe.param_dict()
    state = neural.AdamState.init(params, lr=cfg.lr, weight_decay=cfg.l2)
    n = features.shape[0]
    for epoch in range(cfg.epochs):
        epoch_rng = np.random.default_rng(child_seed(cfg.seed, 1 + epoch))
        order = epoch_rng.permutation(n) if cfg.shuffle else np.arange(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            feats, targs = features[idx], labels[idx]

            def loss_fn(p):
                hid = neural.dense_t(ad.Tensor(feats), p, "l1.", "relu")
                logits = ad.linear(hid, p["l2.W"], p["l2.b"])
                return ad.bce_with_logits(ad.reshape(logits, (idx.size,)), targs)

            _, grads = neural.compute_gradients(loss_fn, params)
            neural.adam_step(params, grads, state)
    return UCProbe.from_param_dict(params)


def probe_train_eval(train_sets: Dict[float, Tuple[np.ndarray, np.ndarray]],
                     test_sets: Dict[float, Tuple[np.ndarray, np.ndarray]],
                     cfg: TrainConfig) -> Dict[float, float]:
    """Per noise level: train the probe on in-system features, report
    accuracy on the cross-system test features."""
    accuracies = {}
    for level, (feats, labels) in sorted(train_sets.items()):
        test_feats, test_labels = test_sets[level]
        _check_balance(np.asarray(test_labels), "probe test set")
        probe = train_probe(feats, labels, cfg)
        pred = probe_forward(probe, test_feats) > 0.5
        accuracies[level] = float(np.mean(pred == (np.asarray(test_labels) > 0.5)))
    return accuracies
