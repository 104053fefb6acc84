"""Dynamical-system families, single-step maps, Jacobians, and trajectory generation.

Four families are supported:

* ``kcc`` -- a 2-D map for heritable cell-cycle durations forced by a
  circadian oscillator.  State is (phase, duration); the phase is the
  division time modulo the oscillator period (the raw time grows without
  bound and only its phase enters the forcing term).  The observable is
  the cycle duration.
* ``zmap`` -- the 1-D family x' = 1 - r*|x|**z on [-1, 1].
* ``glm`` -- the generalized logistic family x' = r*(x - x**z).
* ``quadmap`` -- a 2-D map with full quadratic right-hand sides and 12
  coefficients.  The observable is the x component.

Dynamical noise is additive Gaussian, drawn per step with standard
deviation ``sigma`` (independently per daughter at tree splits).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DivergedTrajectory, FormatError, InvalidInput, SingularJacobian

KCC = "kcc"
ZMAP = "zmap"
GLM = "glm"
QUADMAP = "quadmap"
FAMILIES = (KCC, ZMAP, GLM, QUADMAP)

# Orbits whose observable exceeds this are treated as diverged.
DIVERGENCE_GUARD = 1.0e6

DEFAULT_T_OSC = 24.0
DEFAULT_TRANSIENT = 500


@dataclass(frozen=True)
class KCCParams:
    """Kicked cell-cycle parameters (times in hours)."""

    alpha: float
    k: float
    tau0: float
    t_osc: float = DEFAULT_T_OSC
    sigma: float = 0.0

    def __post_init__(self):
        if self.t_osc <= 0:
            raise ValueError(f"t_osc must be positive, got {self.t_osc}")
        if self.tau0 <= 0:
            raise ValueError(f"tau0 must be positive, got {self.tau0}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


@dataclass(frozen=True)
class ZMapParams:
    """Parameters of x' = 1 - r*|x|**z."""

    r: float
    z: float
    sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.r <= 2.0:
            raise ValueError(f"r must lie in [0, 2], got {self.r}")
        if self.z <= 0:
            raise ValueError(f"z must be positive, got {self.z}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


@dataclass(frozen=True)
class GLMParams:
    """Parameters of x' = r*(x - x**z)."""

    r: float
    z: int
    sigma: float = 0.0

    def __post_init__(self):
        if int(self.z) != self.z or self.z < 2:
            raise ValueError(f"z must be an integer >= 2, got {self.z}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


@dataclass(frozen=True)
class QuadMapParams:
    """Coefficients a1..a12 of the 2-D quadratic map."""

    a: tuple
    sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        if len(self.a) != 12:
            raise ValueError(f"quadmap needs 12 coefficients, got {len(self.a)}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


_PARAM_TYPES = {KCC: KCCParams, ZMAP: ZMapParams, GLM: GLMParams, QUADMAP: QuadMapParams}
_STATE_DIM = {KCC: 2, ZMAP: 1, GLM: 1, QUADMAP: 2}
_NOISE_DIM = {KCC: 1, ZMAP: 1, GLM: 1, QUADMAP: 2}


@dataclass(frozen=True)
class SystemSpec:
    """A family tag plus its matching parameter record."""

    family: str
    params: object

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        expected = _PARAM_TYPES[self.family]
        if not isinstance(self.params, expected):
            raise ValueError(
                f"family {self.family!r} requires {expected.__name__}, "
                f"got {type(self.params).__name__}"
            )

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def state_dim(self) -> int:
        return _STATE_DIM[self.family]

    @property
    def noise_dim(self) -> int:
        return _NOISE_DIM[self.family]

    def with_sigma(self, sigma: float) -> "SystemSpec":
        """Copy of this spec with the dynamical-noise level replaced."""
        import dataclasses

        return SystemSpec(self.family, dataclasses.replace(self.params, sigma=sigma))


def kcc(alpha: float, k: float, tau0: float, t_osc: float = DEFAULT_T_OSC,
        sigma: float = 0.0) -> SystemSpec:
    return SystemSpec(KCC, KCCParams(alpha, k, tau0, t_osc, sigma))


def zmap(r: float, z: float, sigma: float = 0.0) -> SystemSpec:
    return SystemSpec(ZMAP, ZMapParams(r, z, sigma))


def glm(r: float, z: int, sigma: float = 0.0) -> SystemSpec:
    return SystemSpec(GLM, GLMParams(r, z, sigma))


def quadmap(a: Sequence[float], sigma: float = 0.0) -> SystemSpec:
    return SystemSpec(QUADMAP, QuadMapParams(tuple(a), sigma))


@dataclass(frozen=True)
class SeqTrajectory:
    """An observable time series plus the recipe that generated it."""

    values: np.ndarray
    spec: SystemSpec
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("values must be a non-empty 1-D array")

    @property
    def n(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class TreeTrajectory:
    """A binary tree of observables in breadth-first slot order.

    ``values`` has 2**depth - 1 slots; absent slots (pruned subtrees) hold
    NaN and are flagged False in ``present``.  Slot i's children sit at
    2i+1 and 2i+2.
    """

    depth: int
    values: np.ndarray
    present: np.ndarray
    spec: SystemSpec
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "present", np.asarray(self.present, dtype=bool))
        n_slots = 2 ** self.depth - 1
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.values.shape != (n_slots,) or self.present.shape != (n_slots,):
            raise ValueError(f"expected {n_slots} slots for depth {self.depth}")
        if not self.present[0]:
            raise ValueError("root must be present")
        parents = (np.arange(1, n_slots) - 1) // 2
        orphans = self.present[1:] & ~self.present[parents]
        if orphans.any():
            raise ValueError("a node is present only if its parent is present")

    @property
    def node_count(self) -> int:
        return int(self.present.sum())

    def leaf_mask(self) -> np.ndarray:
        """Present nodes with no present children."""
        n_slots = self.values.size
        has_child = np.zeros(n_slots, dtype=bool)
        idx = np.arange(n_slots)
        left, right = 2 * idx + 1, 2 * idx + 2
        ok = left < n_slots
        has_child[idx[ok]] = self.present[left[ok]]
        ok = right < n_slots
        has_child[idx[ok]] |= self.present[right[ok]]
        return self.present & ~has_child


def _check_state(spec: SystemSpec, state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (spec.state_dim,):
        raise InvalidInput(
            f"{spec.family} state must have shape ({spec.state_dim},), got {state.shape}"
        )
    return state


def step(spec: SystemSpec, state: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Advance one iteration.  ``noise`` holds pre-scaled Gaussian samples.

    Raises DivergedTrajectory when the resulting observable is non-finite
    or exceeds the divergence guard.
    """
    state = _check_state(spec, state)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (spec.noise_dim,):
        raise InvalidInput(
            f"{spec.family} noise must have shape ({spec.noise_dim},), got {noise.shape}"
        )
    p = spec.params
    if spec.family == KCC:
        phi, T = state
        incr = p.tau0 * (1.0 - p.alpha) + p.alpha * T \
            + p.k * math.sin(2.0 * math.pi * phi / p.t_osc) + noise[0]
        out = np.array([(phi + incr) % p.t_osc, incr])
    elif spec.family == ZMAP:
        x = state[0]
        out = np.array([1.0 - p.r * abs(x) ** p.z + noise[0]])
    elif spec.family == GLM:
        x = state[0]
        out = np.array([p.r * (x - x ** p.z) + noise[0]])
    else:
        x, y = state
        a = p.a
        out = np.array([
            a[0] + a[1] * x + a[2] * x * x + a[3] * x * y + a[4] * y + a[5] * y * y + noise[0],
            a[6] + a[7] * x + a[8] * x * x + a[9] * x * y + a[10] * y + a[11] * y * y + noise[1],
        ])
    obs = observable(spec, out)
    if not math.isfinite(obs) or abs(obs) > DIVERGENCE_GUARD:
        raise DivergedTrajectory(f"{spec.family} orbit diverged", index=0)
    return out


def observable(spec: SystemSpec, state: np.ndarray) -> float:
    """The recorded scalar: duration for kcc, x for the map families."""
    if spec.family == KCC:
        return float(state[1])
    return float(state[0])


def jacobian(spec: SystemSpec, state: np.ndarray) -> np.ndarray:
    """Exact Jacobian of the deterministic part at ``state``."""
    state = _check_state(spec, state)
    p = spec.params
    if spec.family == KCC:
        c = (2.0 * math.pi * p.k / p.t_osc) * math.cos(2.0 * math.pi * state[0] / p.t_osc)
        return np.array([[1.0 + c, p.alpha], [c, p.alpha]])
    if spec.family == ZMAP:
        x = state[0]
        if x == 0.0 and p.z < 1.0:
            raise SingularJacobian(f"zmap derivative unbounded at x=0 for z={p.z}")
        s = 1.0 if x >= 0.0 else -1.0
        return np.array([[-p.r * p.z * abs(x) ** (p.z - 1.0) * s]])
    if spec.family == GLM:
        x = state[0]
        return np.array([[p.r * (1.0 - p.z * x ** (p.z - 1))]])
    x, y = state
    a = p.a
    return np.array([
        [a[1] + 2.0 * a[2] * x + a[3] * y, a[3] * x + a[4] + 2.0 * a[5] * y],
        [a[7] + 2.0 * a[8] * x + a[9] * y, a[9] * x + a[10] + 2.0 * a[11] * y],
    ])


def initial_state(spec: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw a starting state: zmap uniform on [-1,1], glm uniform on (0,1),
    kcc random phase with duration tau0, quadmap the origin."""
    p = spec.params
    if spec.family == KCC:
        return np.array([rng.uniform(0.0, p.t_osc), p.tau0])
    if spec.family == ZMAP:
        return np.array([rng.uniform(-1.0, 1.0)])
    if spec.family == GLM:
        x = rng.uniform(0.0, 1.0)
        while x == 0.0:
            x = rng.uniform(0.0, 1.0)
        return np.array([x])
    return np.zeros(2)


# ---------------------------------------------------------------------------
# Vectorized stepping kernels.  Each advances a batch of lanes, where lane j
# has its own parameters, state, and noise row.  Lanes that diverge are
# recorded in ``first_bad`` (step index of first divergence, -1 if clean)
# and frozen so NaNs do not propagate warnings.
# ---------------------------------------------------------------------------


class _BatchKernel:
    """Shared stepping state for a batch of same-family systems."""

    def __init__(self, specs: Sequence[SystemSpec]):
        family = specs[0].family
        if any(s.family != family for s in specs):
            raise InvalidInput("batch must share one family")
        self.family = family
        self.m = len(specs)
        ps = [s.params for s in specs]
        if family == KCC:
            self.alpha = np.array([p.alpha for p in ps])
            self.k = np.array([p.k for p in ps])
            self.tau0 = np.array([p.tau0 for p in ps])
            self.t_osc = np.array([p.t_osc for p in ps])
            self.w = 2.0 * np.pi / self.t_osc
        elif family in (ZMAP, GLM):
            self.r = np.array([p.r for p in ps])
            self.z = np.array([float(p.z) for p in ps])
        else:
            self.a = np.array([p.a for p in ps])  # (m, 12)
        self.sigma = np.array([p.sigma for p in ps])

    def advance(self, state: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """One step for all lanes: state (m, dim), noise (m, noise_dim)."""
        with np.errstate(all="ignore"):
            if self.family == KCC:
                phi, T = state[:, 0], state[:, 1]
                incr = self.tau0 * (1.0 - self.alpha) + self.alpha * T \
                    + self.k * np.sin(self.w * phi) + noise[:, 0]
                return np.stack([(phi + incr) % self.t_osc, incr], axis=1)
            if self.family == ZMAP:
                x = state[:, 0]
                return (1.0 - self.r * np.abs(x) ** self.z + noise[:, 0])[:, None]
            if self.family == GLM:
                x = state[:, 0]
                return (self.r * (x - x ** self.z) + noise[:, 0])[:, None]
            x, y = state[:, 0], state[:, 1]
            a = self.a
            xn = a[:, 0] + a[:, 1] * x + a[:, 2] * x * x + a[:, 3] * x * y \
                + a[:, 4] * y + a[:, 5] * y * y + noise[:, 0]
            yn = a[:, 6] + a[:, 7] * x + a[:, 8] * x * x + a[:, 9] * x * y \
                + a[:, 10] * y + a[:, 11] * y * y + noise[:, 1]
            return np.stack([xn, yn], axis=1)

    def observables(self, state: np.ndarray) -> np.ndarray:
        return state[:, 1] if self.family == KCC else state[:, 0]

    def tangent_logstretch(self, state: np.ndarray, tangent: np.ndarray):
        """Apply the Jacobian at ``state`` to ``tangent`` lanes and return
        (new unit tangent, log stretch factors)."""
        with np.errstate(all="ignore"):
            if self.family == KCC:
                c = self.w * self.k * np.cos(self.w * state[:, 0])
                v1 = (1.0 + c) * tangent[:, 0] + self.alpha * tangent[:, 1]
                v2 = c * tangent[:, 0] + self.alpha * tangent[:, 1]
                nrm = np.hypot(v1, v2)
                nrm = np.maximum(nrm, 1e-300)
                out = np.stack([v1 / nrm, v2 / nrm], axis=1)
                return out, np.log(nrm)
            if self.family == QUADMAP:
                x, y = state[:, 0], state[:, 1]
                a = self.a
                j11 = a[:, 1] + 2.0 * a[:, 2] * x + a[:, 3] * y
                j12 = a[:, 3] * x + a[:, 4] + 2.0 * a[:, 5] * y
                j21 = a[:, 7] + 2.0 * a[:, 8] * x + a[:, 9] * y
                j22 = a[:, 9] * x + a[:, 10] + 2.0 * a[:, 11] * y
                v1 = j11 * tangent[:, 0] + j12 * tangent[:, 1]
                v2 = j21 * tangent[:, 0] + j22 * tangent[:, 1]
                nrm = np.hypot(v1, v2)
                nrm = np.maximum(nrm, 1e-300)
                out = np.stack([v1 / nrm, v2 / nrm], axis=1)
                return out, np.log(nrm)
            x = state[:, 0]
            if self.family == ZMAP:
                deriv = self.r * self.z * np.abs(x) ** (self.z - 1.0)
            else:
                deriv = np.abs(self.r * (1.0 - self.z * x ** (self.z - 1.0)))
            # exact zeros are measure-zero hits of the critical point
            deriv = np.maximum(deriv, 1e-12)
            return tangent, np.log(deriv)


def child_seed(master_seed: int, *indices: int) -> int:
    """Derive an independent 64-bit stream seed for a nested item index.

    Depends only on (master_seed, indices), so per-item streams are stable
    under any batching or scheduling of the surrounding computation.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(indices))
    a, b = ss.generate_state(2, np.uint32)
    return (int(a) << 32) | int(b)


def _draw_noise(rng: np.random.Generator, n: int, dim: int, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros((n, dim))
    return rng.normal(0.0, sigma, size=(n, dim))


def generate_sequence_batch(specs: Sequence[SystemSpec], x0s: np.ndarray, n: int,
                            n_transient: int, seeds: Sequence[int]):
    """Generate one sequence per lane.

    Returns (values (m, n), diverged (m,) bool, bad_step (m,)) where
    bad_step is the recorded-step index of first divergence (negative
    while still inside the transient).
    """
    kern = _BatchKernel(specs)
    m = kern.m
    state = np.array(x0s, dtype=np.float64).reshape(m, -1)
    ndim = specs[0].noise_dim
    noise = np.empty((m, n_transient + n, ndim))
    for j, seed in enumerate(seeds):
        noise[j] = _draw_noise(np.random.default_rng(seed), n_transient + n,
                               ndim, kern.sigma[j])
    values = np.full((m, n), np.nan)
    alive = np.ones(m, dtype=bool)
    diverged = np.zeros(m, dtype=bool)
    bad_step = np.zeros(m, dtype=np.int64)
    for t in range(n_transient + n):
        nxt = kern.advance(state, noise[:, t, :])
        obs = kern.observables(nxt)
        bad = alive & (~np.isfinite(obs) | (np.abs(obs) > DIVERGENCE_GUARD))
        if bad.any():
            diverged |= bad
            bad_step[bad] = t - n_transient
            alive &= ~bad
        if alive.all():
            state = nxt
        else:
            state = np.where(alive[:, None], nxt, state)
        if t >= n_transient:
            values[alive, t - n_transient] = obs[alive]
    return values, diverged, bad_step


def generate_sequence(spec: SystemSpec, x0: np.ndarray, n: int,
                      n_transient: int = DEFAULT_TRANSIENT, seed: int = 0) -> SeqTrajectory:
    """Iterate the map with per-step noise from a seeded stream.

    Discards ``n_transient`` steps, records ``n`` observables; a pure
    function of (spec, x0, n, n_transient, seed).
    """
    if n < 1:
        raise InvalidInput(f"n must be >= 1, got {n}")
    if n_transient < 0:
        raise InvalidInput(f"n_transient must be >= 0, got {n_transient}")
    x0 = _check_state(spec, x0)
    values, diverged, bad_step = generate_sequence_batch(
        [spec], x0[None, :], n, n_transient, [seed])
    if diverged[0]:
        idx = int(bad_step[0])
        raise DivergedTrajectory(f"{spec.family} orbit diverged at step {idx}", index=idx)
    return SeqTrajectory(values[0], spec, seed)


def _tree_noise_count(depth: int, n_transient: int) -> int:
    # burn-in + root step + two draws per internal slot
    return n_transient + 1 + 2 * (2 ** (depth - 1) - 1)


def generate_tree_batch(specs: Sequence[SystemSpec], x0s: np.ndarray, depth: int,
                        seeds: Sequence[int], n_transient: int = DEFAULT_TRANSIENT):
    """Generate one complete binary tree per lane.

    Returns (values (m, 2**depth - 1), diverged (m,) bool, bad_slot (m,))
    with bad_slot the node slot of first divergence (0 when divergence
    happened during burn-in).
    """
    kern = _BatchKernel(specs)
    m = kern.m
    n_slots = 2 ** depth - 1
    n_internal = 2 ** (depth - 1) - 1
    total = _tree_noise_count(depth, n_transient)
    ndim = specs[0].noise_dim
    noise = np.empty((m, total, ndim))
    for j, seed in enumerate(seeds):
        noise[j] = _draw_noise(np.random.default_rng(seed), total, ndim, kern.sigma[j])

    state = np.array(x0s, dtype=np.float64).reshape(m, -1)
    alive = np.ones(m, dtype=bool)
    diverged = np.zeros(m, dtype=bool)
    bad_slot = np.zeros(m, dtype=np.int64)
    for t in range(n_transient):
        nxt = kern.advance(state, noise[:, t, :])
        obs = kern.observables(nxt)
        bad = alive & (~np.isfinite(obs) | (np.abs(obs) > DIVERGENCE_GUARD))
        if bad.any():
            diverged |= bad
            alive &= ~bad
        if alive.all():
            state = nxt
        else:
            state = np.where(alive[:, None], nxt, state)

    dim = state.shape[1]
    node_states = np.empty((m, n_slots, dim))
    values = np.full((m, n_slots), np.nan)
    root = kern.advance(state, noise[:, n_transient, :])
    node_states[:, 0, :] = root
    obs = kern.observables(root)
    bad = alive & (~np.isfinite(obs) | (np.abs(obs) > DIVERGENCE_GUARD))
    if bad.any():
        diverged |= bad
        alive &= ~bad
    values[alive, 0] = obs[alive]

    for slot in range(n_internal):
        parent = node_states[:, slot, :]
        for side in (0, 1):
            child = 2 * slot + 1 + side
            nrow = n_transient + 1 + 2 * slot + side
            nxt = kern.advance(parent, noise[:, nrow, :])
            node_states[:, child, :] = nxt
            obs = kern.observables(nxt)
            bad = alive & (~np.isfinite(obs) | (np.abs(obs) > DIVERGENCE_GUARD))
            if bad.any():
                diverged |= bad
                bad_slot[bad] = child
                alive &= ~bad
            values[alive, child] = obs[alive]
    return values, diverged, bad_slot


def generate_tree(spec: SystemSpec, x0: np.ndarray, depth: int, seed: int = 0,
                  n_transient: int = DEFAULT_TRANSIENT) -> TreeTrajectory:
    """Generate a complete binary tree of observables.

    The root is one step past a noisy burn-in from ``x0``; each node then
    spawns two children with independent noise draws.
    """
    if depth < 1:
        raise InvalidInput(f"depth must be >= 1, got {depth}")
    x0 = _check_state(spec, x0)
    values, diverged, bad_slot = generate_tree_batch(
        [spec], x0[None, :], depth, [seed], n_transient)
    if diverged[0]:
        idx = int(bad_slot[0])
        raise DivergedTrajectory(f"{spec.family} tree diverged at node {idx}", index=idx)
    present = np.ones(2 ** depth - 1, dtype=bool)
    return TreeTrajectory(depth, values[0], present, spec, seed)


def add_measurement_noise(traj: SeqTrajectory, level: float, seed: int = 0) -> SeqTrajectory:
    """Add i.i.d. Gaussian noise with std = level * std(values) to every
    observable.  The input trajectory is untouched."""
    if level < 0:
        raise InvalidInput(f"level must be >= 0, got {level}")
    if level == 0.0:
        return SeqTrajectory(traj.values.copy(), traj.spec, traj.seed)
    scale = level * float(np.std(traj.values))
    rng = np.random.default_rng(seed)
    noisy = traj.values + rng.normal(0.0, 1.0, size=traj.values.shape) * scale
    return SeqTrajectory(noisy, traj.spec, traj.seed)


# ---------------------------------------------------------------------------
# Serialization: one-line JSON manifest, newline, little-endian float64
# payload.  Trees prepend a packed presence bitmap to the payload.
# ---------------------------------------------------------------------------


def params_to_dict(spec: SystemSpec) -> dict:
    p = spec.params
    if spec.family == KCC:
        return {"alpha": p.alpha, "k": p.k, "tau0": p.tau0, "t_osc": p.t_osc,
                "sigma": p.sigma}
    if spec.family == ZMAP:
        return {"r": p.r, "z": p.z, "sigma": p.sigma}
    if spec.family == GLM:
        return {"r": p.r, "z": p.z, "sigma": p.sigma}
    return {"a": list(p.a), "sigma": p.sigma}


def spec_from_dict(family: str, d: dict) -> SystemSpec:
    if family == KCC:
        return kcc(d["alpha"], d["k"], d["tau0"], d.get("t_osc", DEFAULT_T_OSC),
                   d.get("sigma", 0.0))
    if family == ZMAP:
        return zmap(d["r"], d["z"], d.get("sigma", 0.0))
    if family == GLM:
        return glm(d["r"], int(d["z"]), d.get("sigma", 0.0))
    if family == QUADMAP:
        return quadmap(d["a"], d.get("sigma", 0.0))
    raise FormatError(f"unknown family {family!r}")


def write_manifest_payload(path, manifest: dict, payload: bytes) -> None:
    line = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def read_manifest_payload(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing manifest line")
    try:
        manifest = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt manifest ({exc})") from exc
    if not isinstance(manifest, dict):
        raise FormatError(f"{path}: manifest is not an object")
    return manifest, raw[nl + 1:]


def _pack_present(present: np.ndarray) -> bytes:
    return np.packbits(present.astype(np.uint8), bitorder="little").tobytes()


def _unpack_present(blob: bytes, n_slots: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8), bitorder="little")
    return bits[:n_slots].astype(bool)


def save_trajectory(traj, path) -> None:
    if isinstance(traj, SeqTrajectory):
        manifest = {
            "format": "chaoskit-trajectory", "version": 1, "kind": "seq",
            "family": traj.spec.family, "params": params_to_dict(traj.spec),
            "seed": traj.seed, "n": traj.n,
        }
        payload = traj.values.astype("<f8").tobytes()
    elif isinstance(traj, TreeTrajectory):
        manifest = {
            "format": "chaoskit-trajectory", "version": 1, "kind": "tree",
            "family": traj.spec.family, "params": params_to_dict(traj.spec),
            "seed": traj.seed, "depth": traj.depth,
        }
        payload = _pack_present(traj.present) \
            + traj.values[traj.present].astype("<f8").tobytes()
    else:
        raise InvalidInput(f"cannot save {type(traj).__name__}")
    write_manifest_payload(path, manifest, payload)


def load_trajectory(path):
    manifest, payload = read_manifest_payload(path)
    if manifest.get("format") != "chaoskit-trajectory":
        raise FormatError(f"{path}: not a trajectory file")
    spec = spec_from_dict(manifest["family"], manifest["params"])
    if manifest["kind"] == "seq":
        n = int(manifest["n"])
        if len(payload) != 8 * n:
            raise FormatError(f"{path}: payload holds {len(payload)} bytes, expected {8 * n}")
        values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
        return SeqTrajectory(values, spec, int(manifest["seed"]))
    if manifest["kind"] == "tree":
        depth = int(manifest["depth"])
        n_slots = 2 ** depth - 1
        nbytes_bits = (n_slots + 7) // 8
        if len(payload) < nbytes_bits:
            raise FormatError(f"{path}: truncated presence bitmap")
        present = _unpack_present(payload[:nbytes_bits], n_slots)
        n_vals = int(present.sum())
        body = payload[nbytes_bits:]
        if len(body) != 8 * n_vals:
            raise FormatError(f"{path}: payload holds {len(body)} bytes, expected {8 * n_vals}")
        values = np.full(n_slots, np.nan)
        values[present] = np.frombuffer(body, dtype="<f8")
        return TreeTrajectory(depth, values, present, spec, int(manifest["seed"]))
    raise FormatError(f"{path}: unknown trajectory kind {manifest['kind']!r}")
