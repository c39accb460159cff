"""Overdamped Langevin sampling by Euler-Maruyama with feasibility rejection.

A step proposes ``Q' = Q - tau grad E(Q) + sqrt(2 tau / beta) G``. When the
proposal leaves the feasible set, ``G`` is redrawn from the same stream, up
to ``max_rejects`` times. The chain is a pure function of the initial state,
the target, the parameters and the seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Protocol

import numpy as np

from .geometry import ParticleConfig
from .potentials import PotentialModel, model_energy, model_energy_and_gradient


class StuckState(RuntimeError):
    """No feasible proposal within ``max_rejects`` redraws."""

    def __init__(self, step: int, rejects: int):
        super().__init__(
            f"no feasible proposal at step {step} after {rejects} redraws; reduce tau"
        )
        self.step, self.rejects = step, rejects


@dataclass(frozen=True)
class SamplerParams:
    tau: float
    beta: float = 1.0
    steps: int = 1000
    seed: int = 0
    max_rejects: int = 100
    gamma: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.max_rejects < 0:
            raise ValueError("max_rejects must be nonnegative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def noise_scale(self) -> float:
        """``sqrt(2 tau / beta)``; zero in the deterministic limit ``beta = inf``."""
        return math.sqrt(2.0 * self.tau / self.beta)


class Target(Protocol):
    """Sampling target: a potential on ``R^dim`` with a feasible set."""

    dim: int

    def feasible(self, q: np.ndarray) -> bool: ...

    def energy(self, q: np.ndarray) -> float: ...

    def energy_and_gradient(self, q: np.ndarray) -> tuple[float, np.ndarray]: ...


@dataclass(frozen=True)
class ParticleTarget:
    """Full interaction potential over the coordinates of a particle template."""

    template: ParticleConfig
    model: PotentialModel

    @property
    def dim(self) -> int:
        return 3 * self.template.n

    def config(self, q) -> ParticleConfig:
        return self.template.with_coordinates(q, validate=False)

    def feasible(self, q) -> bool:
        return self.config(q).is_feasible()

    def energy(self, q) -> float:
        return model_energy(self.config(q), self.model)

    def energy_and_gradient(self, q):
        return model_energy_and_gradient(self.config(q), self.model)


@dataclass(frozen=True)
class QuadraticTarget:
    """``E(q) = stiffness |q|^2 / 2`` on ``R^dim``, everywhere feasible.

    With ``dim > 1`` the coordinates are independent copies of the 1D toy.
    """

    stiffness: float = 1.0
    dim: int = 1

    def feasible(self, q) -> bool:
        return True

    def energy(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return 0.5 * self.stiffness * float(q @ q)

    def energy_and_gradient(self, q):
        q = np.asarray(q, dtype=float)
        return 0.5 * self.stiffness * float(q @ q), self.stiffness * q


@dataclass(frozen=True)
class FreeTarget:
    """Zero potential; isolates the noise term."""

    dim: int = 1

    def feasible(self, q) -> bool:
        return True

    def energy(self, q) -> float:
        return 0.0

    def energy_and_gradient(self, q):
        return 0.0, np.zeros(self.dim)


def em_step(state, grad, params: SamplerParams, rng: np.random.Generator, feasible=None, step: int = 0):
    """One Euler-Maruyama step; returns ``(next_state, redraws)``.

    ``feasible`` is a predicate on proposals; ``None`` accepts everything.
    """
    q = np.asarray(state, dtype=float)
    drift = q - params.tau * np.asarray(grad, dtype=float)
    scale = params.noise_scale
    for redraws in range(params.max_rejects + 1):
        proposal = drift + scale * rng.standard_normal(q.shape)
        if feasible is None or feasible(proposal):
            return proposal, redraws
    raise StuckState(step, params.max_rejects)


def underdamped_step(state, velocity, grad, params: SamplerParams, rng: np.random.Generator, feasible=None, step: int = 0):
    """Euler-Maruyama for ``dq = v dt``, ``dv = -grad E dt - gamma v dt + sqrt(2 gamma / beta) dB``.

    Returns ``(state, velocity, redraws)``. An infeasible position update
    redraws the velocity noise.
    """
    q = np.asarray(state, dtype=float)
    v = np.asarray(velocity, dtype=float)
    q_new = q + params.tau * v
    if feasible is not None and not feasible(q_new):
        raise StuckState(step, 0)
    base = v - params.tau * np.asarray(grad, dtype=float) - params.tau * params.gamma * v
    scale = math.sqrt(2.0 * params.gamma * params.tau / params.beta)
    for redraws in range(params.max_rejects + 1):
        v_new = base + scale * rng.standard_normal(q.shape)
        if feasible is None or feasible(q_new + params.tau * v_new):
            return q_new, v_new, redraws
    raise StuckState(step, params.max_rejects)


@dataclass
class Checkpoint:
    """Resumable chain state after ``step`` completed steps."""

    step: int
    state: np.ndarray
    energy: float
    gradient: np.ndarray
    rng_state: dict
    params: SamplerParams

    def to_json(self) -> str:
        return json.dumps(
            {
                "step": self.step,
                "state": [float(v) for v in self.state],
                "energy": float(self.energy),
                "gradient": [float(v) for v in self.gradient],
                "rng_state": self.rng_state,
                "params": asdict(self.params),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        d = json.loads(text)
        return cls(
            d["step"],
            np.array(d["state"], dtype=float),
            d["energy"],
            np.array(d["gradient"], dtype=float),
            d["rng_state"],
            SamplerParams(**d["params"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path) as f:
            return cls.from_json(f.read())

    def generator(self) -> np.random.Generator:
        bg = np.random.PCG64()
        bg.state = self.rng_state
        return np.random.Generator(bg)


def _initial(target: Target, q0, params: SamplerParams) -> Checkpoint:
    q0 = np.asarray(q0, dtype=float).ravel()
    if q0.size != target.dim:
        raise ValueError(f"initial state has {q0.size} components, target needs {target.dim}")
    if not target.feasible(q0):
        raise ValueError("initial state is infeasible")
    e, g = target.energy_and_gradient(q0)
    if not math.isfinite(e):
        raise ValueError("initial energy is not finite")
    rng = np.random.default_rng(params.seed)
    return Checkpoint(0, q0, e, g, rng.bit_generator.state, params)


def iterate_chain(target: Target, q0=None, params: SamplerParams | None = None, resume: Checkpoint | None = None) -> Iterator[tuple[int, np.ndarray, float, int, Checkpoint]]:
    """Yield ``(k, Q_k, E(Q_k), redraws_k, checkpoint)`` for ``k`` up to ``params.steps``.

    Starting fresh yields ``k = 0`` first; resuming yields from
    ``resume.step + 1``.
    """
    if resume is None:
        ck = _initial(target, q0, params)
        yield 0, ck.state, ck.energy, 0, ck
    else:
        ck = resume
        params = params or resume.params
    rng = ck.generator()
    q, e, g = ck.state, ck.energy, ck.gradient
    for k in range(ck.step + 1, params.steps + 1):
        q, redraws = em_step(q, g, params, rng, target.feasible, step=k)
        e, g = target.energy_and_gradient(q)
        if not math.isfinite(e):
            raise StuckState(k, redraws)
        yield k, q, e, redraws, Checkpoint(k, q, e, g, rng.bit_generator.state, params)


@dataclass
class Trajectory:
    """States ``Q_0..Q_M`` with cached energies and per-step redraw counts."""

    states: np.ndarray
    energies: np.ndarray
    redraws: np.ndarray
    params: SamplerParams
    start: int = 0
    template: ParticleConfig | None = field(default=None, repr=False)
    checkpoint: Checkpoint | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.energies)

    @property
    def steps(self) -> np.ndarray:
        return self.start + np.arange(len(self))

    def configs(self):
        if self.template is None:
            raise ValueError("trajectory has no particle template")
        return [self.template.with_coordinates(q, validate=False) for q in self.states]

    def concatenate(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(
            np.vstack([self.states, other.states]),
            np.concatenate([self.energies, other.energies]),
            np.concatenate([self.redraws, other.redraws]),
            self.params,
            self.start,
            self.template,
            other.checkpoint,
        )

    def write_csv(self, path, append: bool = False) -> None:
        write_trajectory_csv(self, path, append)


def run_chain(target: Target, q0=None, params: SamplerParams | None = None, resume: Checkpoint | None = None) -> Trajectory:
    """Run the chain to ``params.steps`` and keep every state."""
    states, energies, redraws = [], [], []
    ck = resume
    for k, q, e, r, ck in iterate_chain(target, q0, params, resume):
        states.append(q)
        energies.append(e)
        redraws.append(r)
    params = params or resume.params
    start = 0 if resume is None else resume.step + 1
    dim = target.dim
    return Trajectory(
        np.array(states, dtype=float).reshape(-1, dim),
        np.array(energies, dtype=float),
        np.array(redraws, dtype=int),
        params,
        start,
        getattr(target, "template", None),
        ck,
    )


def trajectory_header(dim: int) -> list[str]:
    if dim % 3 == 0:
        names = [f"{c}{i + 1}" for i in range(dim // 3) for c in ("x", "y", "alpha")]
    else:
        names = [f"q{i + 1}" for i in range(dim)]
    return ["step", *names, "E0", "redraws"]


def write_trajectory_csv(traj: Trajectory, path, append: bool = False) -> None:
    dim = traj.states.shape[1]
    with open(path, "a" if append else "w", newline="") as f:
        w = csv.writer(f)
        if not append:
            w.writerow(trajectory_header(dim))
        for k, q, e, r in zip(traj.steps, traj.states, traj.energies, traj.redraws):
            w.writerow([int(k), *(repr(float(v)) for v in q), repr(float(e)), int(r)])


def read_trajectory_csv(path, params: SamplerParams | None = None, template=None) -> Trajectory:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    if header[0] != "step" or header[-2:] != ["E0", "redraws"]:
        raise ValueError(f"{path}: not a trajectory file")
    data = np.array([[float(v) for v in r[1:-1]] for r in body], dtype=float)
    steps = [int(r[0]) for r in body]
    dim = len(header) - 3
    return Trajectory(
        data[:, :dim].reshape(-1, dim),
        data[:, dim],
        np.array([int(r[-1]) for r in body], dtype=int),
        params or SamplerParams(tau=1.0, steps=max(1, len(body) - 1)),
        steps[0] if steps else 0,
        template,
    )
