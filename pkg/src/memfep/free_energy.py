"""Zwanzig free-energy perturbation along a reaction coordinate.

For a reference chain ``Q_0..Q_M`` sampled under ``E_0``,

    A_M = mean_k exp(-beta (E_w(Q_k) - E_0(Q_k))),   dF_M(w) = -log(A_M) / beta.

All averages are evaluated in shifted log-sum-exp form, so constant energy
differences give ``dF = c`` exactly and large differences do not underflow.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .langevin import ParticleTarget, QuadraticTarget, Trajectory
from .potentials import direct_potential

# normal quantile for two-sided 95% intervals
Z95 = 1.959963984540054
# effective sample size below which an estimate is flagged
MIN_EFFECTIVE = 10.0


class DegenerateEstimate(ArithmeticError):
    def __init__(self, omega: float, n_effective: float):
        super().__init__(f"omega={omega}: effective sample size {n_effective:.3g} < {MIN_EFFECTIVE}")
        self.omega, self.n_effective = omega, n_effective


class TooFewBlocks(ValueError):
    pass


# ---------------------------------------------------------------- protocols


@dataclass(frozen=True)
class PerturbationProtocol:
    """Named rule producing ``E_w - E_0`` at a state.

    ``perturb(target, w)`` returns the perturbed target; ``difference``, when
    given, computes ``E_w(q) - E_0(q)`` directly from ``(target, q, e0, w)``
    and bypasses the full re-evaluation.
    """

    name: str
    perturb: Callable | None = None
    difference: Callable | None = None
    touches_membrane: bool = True

    def energy_difference(self, target, q, e0: float, omega: float) -> float:
        if omega == 0.0:
            return 0.0
        if self.difference is not None:
            return float(self.difference(target, q, e0, omega))
        return float(self.perturb(target, omega).energy(q)) - e0


def _scale_profiles(target: ParticleTarget, h: float, s: float) -> ParticleTarget:
    parts = [replace(p, profile=p.profile.scaled(h, s)) for p in target.template.particles]
    return replace(target, template=target.template.with_particles(parts))


def _scale_physics(target: ParticleTarget, kappa: float, sigma: float) -> ParticleTarget:
    ph = target.model.physics
    physics = replace(ph, kappa=ph.kappa * kappa, sigma=ph.sigma * sigma)
    return replace(target, model=target.model.with_physics(physics))


def _rigidity_difference(target: ParticleTarget, q, e0, omega):
    if target.model.physics.sigma != 0.0 or not target.model.membrane:
        return _scale_physics(target, 1.0 + omega, 1.0).energy(q) - e0
    # without tension the minimizer does not depend on kappa, so M scales linearly
    sw = target.model.softwall
    p = direct_potential(target.config(q), sw)[0] if sw is not None else 0.0
    return omega * (e0 - p)


def _lj_difference(target: ParticleTarget, q, e0, omega):
    sw = target.model.softwall
    if sw is None:
        return 0.0
    config = target.config(q)
    p0, _ = direct_potential(config, sw)
    p1, _ = direct_potential(config, sw.scaled_eps(1.0 + omega))
    return p1 - p0


def _stiffness_scale(target: QuadraticTarget, omega):
    return replace(target, stiffness=target.stiffness * (1.0 + omega))


def shift_protocol(c: float) -> PerturbationProtocol:
    """``E_w = E_0 + c w``: a state-independent offset."""
    return PerturbationProtocol("shift", difference=lambda t, q, e0, w: c * w, touches_membrane=False)


PROTOCOLS = {
    "slope-scale": PerturbationProtocol("slope-scale", lambda t, w: _scale_profiles(t, 1.0, 1.0 + w)),
    "height-scale": PerturbationProtocol("height-scale", lambda t, w: _scale_profiles(t, 1.0 + w, 1.0)),
    "tension-scale": PerturbationProtocol("tension-scale", lambda t, w: _scale_physics(t, 1.0, 1.0 + w)),
    "rigidity-scale": PerturbationProtocol(
        "rigidity-scale", lambda t, w: _scale_physics(t, 1.0 + w, 1.0), _rigidity_difference
    ),
    "lj-scale": PerturbationProtocol("lj-scale", difference=_lj_difference, touches_membrane=False),
    "identity": PerturbationProtocol("identity", difference=lambda t, q, e0, w: 0.0, touches_membrane=False),
    "stiffness-scale": PerturbationProtocol("stiffness-scale", _stiffness_scale, touches_membrane=False),
}


def get_protocol(name: str) -> PerturbationProtocol:
    try:
        return PROTOCOLS[name]
    except KeyError:
        raise ValueError(f"unknown protocol {name!r}; choose from {sorted(PROTOCOLS)}") from None


# ---------------------------------------------------------------- estimators


def zwanzig_observable(target, q, omega: float, protocol: PerturbationProtocol, beta: float, e0: float | None = None) -> float:
    """``A(q) = exp(-beta (E_w(q) - E_0(q)))``."""
    if e0 is None:
        e0 = target.energy(q)
    return math.exp(-beta * protocol.energy_difference(target, q, e0, omega))


def _log_mean_exp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + math.log(float(np.mean(np.exp(x - m))))


def effective_sample_size(log_w: np.ndarray) -> float:
    w = np.exp(log_w - np.max(log_w))
    return float(w.sum() ** 2 / (w * w).sum())


def block_variance(weights, block_size: int, beta: float = 1.0) -> tuple[float, float]:
    """Variance of the mean of ``weights`` from contiguous block means.

    Returns ``(variance, half_width)``, where ``half_width`` is the 95%
    delta-method half-width of ``-log(mean) / beta``. A trailing partial
    block is dropped.
    """
    w = np.asarray(weights, dtype=float).ravel()
    if block_size < 1:
        raise ValueError("block_size must be positive")
    nb = w.size // block_size
    if nb < 2:
        raise TooFewBlocks(f"{w.size} samples give {nb} blocks of size {block_size}; need at least 2")
    means = w[: nb * block_size].reshape(nb, block_size).mean(axis=1)
    var = float(np.var(means, ddof=1) / nb)
    a = float(means.mean())
    half = Z95 * math.sqrt(var) / a / beta if a > 0 else math.inf
    return var, half


@dataclass(frozen=True)
class FepEntry:
    omega: float
    A_hat: float
    dF_hat: float
    variance: float
    ci_half_width: float
    n_effective: float
    mean_difference: float
    degenerate: bool = False

    @property
    def jensen_ok(self) -> bool:
        """``dF <= mean(E_w - E_0)`` up to rounding."""
        tol = 1e-12 * (1.0 + abs(self.mean_difference))
        return self.degenerate or self.dF_hat <= self.mean_difference + tol


@dataclass
class FepResult:
    protocol: str
    beta: float
    entries: list = field(default_factory=list)

    def entry(self, omega: float) -> FepEntry:
        for e in self.entries:
            if e.omega == omega:
                return e
        raise KeyError(omega)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([e.omega for e in self.entries])

    @property
    def dF(self) -> np.ndarray:
        return np.array([e.dF_hat for e in self.entries])

    def write_csv(self, path) -> None:
        write_fep_csv(self, path)


def default_block_size(n: int) -> int:
    """Block length giving about ``sqrt(n)`` blocks, at least two."""
    return max(1, n // max(2, int(math.isqrt(n))))


def estimate_from_differences(diffs, omega: float, beta: float, block_size: int | None = None, strict: bool = True) -> FepEntry:
    """Zwanzig estimate from per-state energy differences ``E_w - E_0``."""
    d = np.asarray(diffs, dtype=float).ravel()
    mean_diff = float(np.mean(d))
    if omega == 0.0 or np.all(d == d[0]):
        # constant differences: exact, no sampling error
        return FepEntry(omega, math.exp(-beta * d[0]), float(d[0]), 0.0, 0.0, float(d.size), mean_diff)
    log_w = -beta * d
    ess = effective_sample_size(log_w)
    lme = _log_mean_exp(log_w)
    dF = -lme / beta
    shift = float(np.max(log_w))
    scaled = np.exp(log_w - shift)
    bs = block_size or default_block_size(d.size)
    var_scaled, half = block_variance(scaled, bs, beta)
    variance = var_scaled * math.exp(2.0 * shift) if shift < 350 else math.inf
    degenerate = ess < MIN_EFFECTIVE
    if degenerate and strict:
        raise DegenerateEstimate(omega, ess)
    return FepEntry(omega, math.exp(lme), dF, variance, half, ess, mean_diff, degenerate)


class DifferenceMemo:
    """Per-(state, omega) cache of ``E_w - E_0`` within one reweighting run."""

    def __init__(self):
        self._store: dict = {}
        self.misses = 0

    def get(self, k: int, omega: float, compute):
        key = (k, omega)
        if key not in self._store:
            self.misses += 1
            self._store[key] = compute()
        return self._store[key]


def energy_differences(trajectory: Trajectory, target, omega: float, protocol: PerturbationProtocol, memo: DifferenceMemo | None = None) -> np.ndarray:
    memo = memo or DifferenceMemo()
    out = np.empty(len(trajectory))
    for k, (q, e0) in enumerate(zip(trajectory.states, trajectory.energies)):
        out[k] = memo.get(k, omega, lambda: protocol.energy_difference(target, q, float(e0), omega))
    return out


def zwanzig_estimate(trajectory: Trajectory, target, omega: float, protocol: PerturbationProtocol, beta: float | None = None, block_size: int | None = None, memo: DifferenceMemo | None = None) -> FepEntry:
    """Estimate from one reference trajectory; raises :class:`DegenerateEstimate`."""
    beta = trajectory.params.beta if beta is None else beta
    diffs = energy_differences(trajectory, target, omega, protocol, memo)
    return estimate_from_differences(diffs, omega, beta, block_size)


def fed_curve(trajectory: Trajectory, target, omegas, protocol: PerturbationProtocol, beta: float | None = None, block_size: int | None = None) -> FepResult:
    """``dF(w)`` over a grid from one trajectory; degenerate points are flagged, not raised."""
    beta = trajectory.params.beta if beta is None else beta
    memo = DifferenceMemo()
    result = FepResult(protocol.name, beta)
    for w in omegas:
        w = float(w)
        diffs = energy_differences(trajectory, target, w, protocol, memo)
        result.entries.append(estimate_from_differences(diffs, w, beta, block_size, strict=False))
    return result


FEP_HEADER = ["omega", "A_hat", "dF_hat", "variance", "ci_half_width", "n_effective"]


def write_fep_csv(result: FepResult, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(FEP_HEADER)
        for e in result.entries:
            w.writerow([repr(float(v)) for v in (e.omega, e.A_hat, e.dF_hat, e.variance, e.ci_half_width, e.n_effective)])


def read_fep_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]


__all__ = [
    "DegenerateEstimate",
    "DifferenceMemo",
    "FepEntry",
    "FepResult",
    "PROTOCOLS",
    "PerturbationProtocol",
    "TooFewBlocks",
    "block_variance",
    "effective_sample_size",
    "energy_differences",
    "estimate_from_differences",
    "fed_curve",
    "get_protocol",
    "shift_protocol",
    "write_fep_csv",
    "zwanzig_estimate",
    "zwanzig_observable",
]
