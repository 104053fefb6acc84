"""Ground-truth largest Lyapunov exponents by tangent-vector propagation.

A unit tangent vector is pushed through the exact Jacobian along a (noisy,
when sigma > 0) orbit; the mean log stretch per iteration after burn-in is
the exponent.  With dynamical noise this yields the stochastic exponent:
the average growth/reduction rate of uncertainty along a noisy realization.

``lle_divergence_oracle`` is an independent two-trajectory (Benettin-style)
estimator kept solely to cross-check the tangent method in tests.

The single-spec entry points use tight scalar loops (fast enough for
thousands of calls); ``lle_tangent_batch`` vectorizes across many systems
at once for dataset labeling.  The two paths agree statistically but not
bitwise: one-ulp libm differences decorrelate chaotic orbits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import dynsys
from .errors import DivergedTrajectory, InvalidInput, SingularJacobian

DEFAULT_N_ITER = 10_000
CONVERGENCE_TOL = 0.01  # half-sample vs full-sample agreement
MAX_RESTARTS = 1000
RESTART_TRANSIENT = 64  # re-burn after an escape; mixing back is fast
ESCAPE_TAIL_DROP = 32  # samples discarded before a detected escape
_GUARD = dynsys.DIVERGENCE_GUARD
_DERIV_FLOOR = 1e-12  # measure-zero hits of a critical point


@dataclass
class LLEResult:
    """A scalar exponent (nats per iteration) plus method diagnostics."""

    lam: float
    method: str
    n_iter: int
    converged: bool
    std_across_restarts: Optional[float] = None


# ---------------------------------------------------------------------------
# Scalar per-family segment runners.  Each iterates burn-in plus up to
# ``n_iter`` accumulation steps, returning (logs, diverged, step) where
# ``logs`` holds one log-stretch per accumulated step and ``step`` is the
# recorded-step index of divergence (only meaningful when diverged).
# ---------------------------------------------------------------------------


def _seg_zmap(p, x, noise, n_transient, n_iter):
    r, z = p.r, float(p.z)
    singular_hits = 0
    logs = []
    for t in range(n_transient + n_iter):
        if t >= n_transient:
            d = r * z * abs(x) ** (z - 1.0)
            if d <= 0.0:
                if z < 1.0:
                    raise SingularJacobian(f"zmap derivative unbounded at x=0 (z={z})")
                singular_hits += 1
                if singular_hits > 2:
                    raise SingularJacobian("tangent collapsed repeatedly at the critical point")
                d = _DERIV_FLOOR
            logs.append(math.log(d))
        xi = noise[t][0] if noise is not None else 0.0
        x = 1.0 - r * abs(x) ** z + xi
        if not math.isfinite(x) or abs(x) > _GUARD:
            return logs, True, t - n_transient
    return logs, False, -1


def _seg_glm(p, x, noise, n_transient, n_iter):
    r, z = p.r, int(p.z)
    singular_hits = 0
    logs = []
    for t in range(n_transient + n_iter):
        if t >= n_transient:
            d = abs(r * (1.0 - z * x ** (z - 1)))
            if d <= 0.0:
                singular_hits += 1
                if singular_hits > 2:
                    raise SingularJacobian("tangent collapsed repeatedly at the critical point")
                d = _DERIV_FLOOR
            logs.append(math.log(d))
        xi = noise[t][0] if noise is not None else 0.0
        x = r * (x - x ** z) + xi
        if not math.isfinite(x) or abs(x) > _GUARD:
            return logs, True, t - n_transient
    return logs, False, -1


def _seg_kcc(p, state, noise, n_transient, n_iter):
    phi, T = state
    alpha, k, tau0, t_osc = p.alpha, p.k, p.tau0, p.t_osc
    w = 2.0 * math.pi / t_osc
    wk = w * k
    base = tau0 * (1.0 - alpha)
    v1, v2 = 1.0, 0.0
    reinit = False
    logs = []
    for t in range(n_transient + n_iter):
        c = wk * math.cos(w * phi)
        u1 = (1.0 + c) * v1 + alpha * v2
        u2 = c * v1 + alpha * v2
        nrm = math.hypot(u1, u2)
        if nrm == 0.0:
            if reinit:
                raise SingularJacobian("tangent vector collapsed twice")
            reinit = True
            v1, v2 = 1.0, 0.0
        else:
            v1, v2 = u1 / nrm, u2 / nrm
            if t >= n_transient:
                logs.append(math.log(nrm))
        xi = noise[t][0] if noise is not None else 0.0
        incr = base + alpha * T + k * math.sin(w * phi) + xi
        phi = (phi + incr) % t_osc
        T = incr
        if not math.isfinite(T) or abs(T) > _GUARD:
            return logs, True, t - n_transient
    return logs, False, -1


def _seg_quadmap(p, state, noise, n_transient, n_iter):
    x, y = state
    a = p.a
    v1, v2 = 1.0, 0.0
    reinit = False
    logs = []
    for t in range(n_transient + n_iter):
        j11 = a[1] + 2.0 * a[2] * x + a[3] * y
        j12 = a[3] * x + a[4] + 2.0 * a[5] * y
        j21 = a[7] + 2.0 * a[8] * x + a[9] * y
        j22 = a[9] * x + a[10] + 2.0 * a[11] * y
        u1 = j11 * v1 + j12 * v2
        u2 = j21 * v1 + j22 * v2
        nrm = math.hypot(u1, u2)
        if nrm == 0.0:
            if reinit:
                raise SingularJacobian("tangent vector collapsed twice")
            reinit = True
            v1, v2 = 1.0, 0.0
        else:
            v1, v2 = u1 / nrm, u2 / nrm
            if t >= n_transient:
                logs.append(math.log(nrm))
        xi1 = noise[t][0] if noise is not None else 0.0
        xi2 = noise[t][1] if noise is not None else 0.0
        xn = a[0] + a[1] * x + a[2] * x * x + a[3] * x * y + a[4] * y + a[5] * y * y + xi1
        yn = a[6] + a[7] * x + a[8] * x * x + a[9] * x * y + a[10] * y + a[11] * y * y + xi2
        x, y = xn, yn
        if not math.isfinite(x) or abs(x) > _GUARD:
            return logs, True, t - n_transient
    return logs, False, -1


_SEGMENT_RUNNERS = {
    dynsys.ZMAP: lambda p, s, nz, nt, ni: _seg_zmap(p, s[0], nz, nt, ni),
    dynsys.GLM: lambda p, s, nz, nt, ni: _seg_glm(p, s[0], nz, nt, ni),
    dynsys.KCC: _seg_kcc,
    dynsys.QUADMAP: _seg_quadmap,
}


def _draw_segment_noise(spec, rng, count):
    if spec.sigma == 0.0:
        return None
    return rng.normal(0.0, spec.sigma, size=(count, spec.noise_dim)).tolist()


def _finish(logs, n_iter, method):
    n = len(logs)
    lam = sum(logs) / n
    half = n // 2
    conv = half > 0 and abs(sum(logs[:half]) / half - lam) < CONVERGENCE_TOL
    return LLEResult(lam=lam, method=method, n_iter=n_iter, converged=conv)


def lle_tangent(spec: dynsys.SystemSpec, x0: Optional[np.ndarray] = None,
                n_transient: int = dynsys.DEFAULT_TRANSIENT,
                n_iter: int = DEFAULT_N_ITER, seed: int = 0,
                on_divergence: str = "raise") -> LLEResult:
    """Largest Lyapunov exponent by tangent propagation along one orbit.

    With sigma > 0 the orbit is a noisy realization drawn from the seeded
    stream (the stochastic exponent).  ``x0`` defaults to a draw from the
    same stream.  The tangent vector is also propagated during burn-in so
    it aligns with the most-expanding direction before accumulation starts.

    ``on_divergence`` selects the policy when the orbit leaves the guard
    region: "raise" propagates DivergedTrajectory; "restart" redraws the
    initial state and keeps accumulating over surviving stretches, giving
    the survival-conditioned exponent of metastable noisy systems (each
    escape's trailing blow-up samples are discarded, and restarts re-burn
    only briefly since mixing back into the band is fast).
    """
    if n_iter < 1:
        raise InvalidInput(f"n_iter must be >= 1, got {n_iter}")
    if on_divergence not in ("raise", "restart"):
        raise InvalidInput(f"unknown on_divergence policy {on_divergence!r}")
    rng = np.random.default_rng(seed)
    run = _SEGMENT_RUNNERS[spec.family]
    p = spec.params

    logs = []
    restarts = 0
    state = None
    while len(logs) < n_iter:
        if state is None:
            state = x0 if (x0 is not None and restarts == 0) \
                else dynsys.initial_state(spec, rng)
            state = np.asarray(state, dtype=np.float64)
        burn = n_transient if restarts == 0 else min(n_transient, RESTART_TRANSIENT)
        remaining = n_iter - len(logs)
        noise = _draw_segment_noise(spec, rng, burn + remaining)
        seg, diverged, step = run(p, state, noise, burn, remaining)
        if not diverged:
            logs.extend(seg)
            break
        if on_divergence == "raise":
            raise DivergedTrajectory(f"{spec.family} orbit diverged at step {step}",
                                     index=step)
        logs.extend(seg[:-ESCAPE_TAIL_DROP] if len(seg) > ESCAPE_TAIL_DROP else [])
        restarts += 1
        if restarts > MAX_RESTARTS:
            raise DivergedTrajectory(
                f"{spec.family} orbit diverged {restarts} times", index=step)
        state = None
    return _finish(logs, n_iter, "tangent")


def lle_tangent_batch(specs: Sequence[dynsys.SystemSpec], seeds: Sequence[int],
                      x0s: Optional[np.ndarray] = None,
                      n_transient: int = dynsys.DEFAULT_TRANSIENT,
                      n_iter: int = DEFAULT_N_ITER):
    """Vectorized tangent exponents for many same-family systems.

    Lane j draws its initial state (unless given) and noise from
    default_rng(seeds[j]), mirroring ``lle_tangent``'s consumption order.
    Returns (lam (m,), converged (m,), diverged (m,)); diverged lanes
    report lam = nan instead of raising.
    """
    kern = dynsys._BatchKernel(specs)
    m = kern.m
    total = n_transient + n_iter
    ndim = specs[0].noise_dim
    noise = np.zeros((m, total, ndim))
    states = np.empty((m, specs[0].state_dim))
    for j, (spec, seed) in enumerate(zip(specs, seeds)):
        rng = np.random.default_rng(seed)
        states[j] = dynsys.initial_state(spec, rng) if x0s is None else x0s[j]
        if spec.sigma > 0.0:
            noise[j] = rng.normal(0.0, spec.sigma, size=(total, ndim))

    dim = states.shape[1]
    tangent = np.zeros((m, dim))
    tangent[:, 0] = 1.0
    s = np.zeros(m)
    s_half = np.zeros(m)
    half = n_iter // 2
    alive = np.ones(m, dtype=bool)
    state = states
    for t in range(total):
        tangent, logstretch = kern.tangent_logstretch(state, tangent)
        if t >= n_transient:
            rec = t - n_transient
            s[alive] += logstretch[alive]
            if rec < half:
                s_half[alive] += logstretch[alive]
        nxt = kern.advance(state, noise[:, t, :])
        obs = kern.observables(nxt)
        bad = alive & (~np.isfinite(obs) | (np.abs(obs) > _GUARD))
        if bad.any():
            alive &= ~bad
        if alive.all():
            state = nxt
        else:
            state = np.where(alive[:, None], nxt, state)
    lam = np.where(alive, s / n_iter, np.nan)
    conv = alive & (np.abs(s_half / max(half, 1) - s / n_iter) < CONVERGENCE_TOL)
    return lam, conv, ~alive


def lle_tangent_restarts(spec: dynsys.SystemSpec, n_restarts: int = 5,
                         n_transient: int = dynsys.DEFAULT_TRANSIENT,
                         n_iter: int = DEFAULT_N_ITER, seed: int = 0) -> LLEResult:
    """Tangent exponent averaged over independent restarts.

    Each restart draws its own initial state and noise realization; the
    dispersion across restarts doubles as an ergodicity diagnostic.
    """
    seeds = [dynsys.child_seed(seed, i) for i in range(n_restarts)]
    lam, conv, div = lle_tangent_batch([spec] * n_restarts, seeds,
                                       n_transient=n_transient, n_iter=n_iter)
    if div.any():
        idx = int(np.flatnonzero(div)[0])
        raise DivergedTrajectory(f"{spec.family} orbit diverged in restart {idx}", index=idx)
    return LLEResult(lam=float(lam.mean()), method="tangent", n_iter=n_iter,
                     converged=bool(conv.all()),
                     std_across_restarts=float(lam.std()))


def _wrap_phase_delta(d: float, t_osc: float) -> float:
    return (d + 0.5 * t_osc) % t_osc - 0.5 * t_osc


def lle_divergence_oracle(spec: dynsys.SystemSpec, x0: np.ndarray,
                          delta0: float = 1e-9, n_iter: int = DEFAULT_N_ITER,
                          n_transient: int = dynsys.DEFAULT_TRANSIENT) -> LLEResult:
    """Benettin-style two-trajectory exponent (deterministic systems only).

    Runs the orbit and a companion separated by delta0, rescaling the
    separation back to delta0 each step and averaging the log growth.
    Used as an independent oracle for ``lle_tangent`` in tests.
    """
    if spec.sigma != 0.0:
        raise InvalidInput("divergence oracle requires sigma = 0")
    if delta0 <= 0.0:
        raise InvalidInput(f"delta0 must be positive, got {delta0}")
    x0 = np.asarray(x0, dtype=np.float64)
    zero = np.zeros(spec.noise_dim)
    t_osc = spec.params.t_osc if spec.family == dynsys.KCC else None

    a = x0.copy()
    for t in range(n_transient):
        a = dynsys.step(spec, a, zero)
    b = a.copy()
    b[0] += delta0

    logs = []
    for t in range(n_iter):
        a = dynsys.step(spec, a, zero)
        b = dynsys.step(spec, b, zero)
        d = b - a
        if t_osc is not None:
            d[0] = _wrap_phase_delta(d[0], t_osc)
        dist = float(np.linalg.norm(d))
        if dist == 0.0:
            # superstable contraction collapsed the pair; re-seed it
            b = a.copy()
            b[0] += delta0
            continue
        logs.append(math.log(dist / delta0))
        b = a + d * (delta0 / dist)
        if t_osc is not None:
            b[0] %= t_osc
    if not logs:
        raise SingularJacobian("separation collapsed at every step")
    n = len(logs)
    lam = sum(logs) / n
    half = n // 2
    conv = half > 0 and abs(sum(logs[:half]) / half - lam) < CONVERGENCE_TOL
    return LLEResult(lam=lam, method="divergence", n_iter=n_iter, converged=conv)
