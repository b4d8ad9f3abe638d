"""Adaptive time integration of the compartmental model.

Two methods are available:

``rk45``
    Dormand-Prince 5(4) embedded pair with FSAL, the reference method.
``semi-implicit``
    Linearly implicit Euler for the diffusion part (which is linear in X,
    ``-(star0^-1 x I) Delta_d diag(1/X*) X``) with the reaction and boundary
    terms explicit, extrapolated over 1, 2 and 4 substeps.  Step sizes are
    restricted to ``h_max / 2**k`` so each factorisation is computed once
    and reused.

Both reject any step that produces a nonpositive component (including
intermediate stages) and retry with half the step.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .compartmental import (
    CompartmentalSystem,
    StateLayout,
    block_reactions,
    disagreement_spread,
    total_energy,
)
from .crn import _require_positive
from .errors import DimensionMismatch, MaxStepsExceeded, StepSizeUnderflow, ValidationError

log = logging.getLogger(__name__)

METHODS = {
    "rk45": "rk45",
    "explicit-embedded-RK45": "rk45",
    "semi-implicit": "semi-implicit",
    "semi-implicit-diffusion": "semi-implicit",
}


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45"
    rtol: float = 1e-8
    atol: float = 1e-10
    h_init: float = 1e-3
    h_min: float = 1e-14
    h_max: float = 1.0
    t_end: float = 50.0
    max_steps: int = 200_000
    positivity: str = "reject-and-halve"
    # optional early stop once the state is a stationary consensus
    stop_on_steady: bool = False
    eps_consensus: float = 1e-7
    eps_stationary: float = 1e-6
    char_time: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")
        object.__setattr__(self, "method", METHODS[self.method])
        if not (self.rtol > 0 and self.atol > 0):
            raise ValidationError("tolerances must be positive")
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValidationError("step sizes must satisfy 0 < h_min <= h_init <= h_max")
        if not self.t_end > 0:
            raise ValidationError("t_end must be positive")
        if self.positivity != "reject-and-halve":
            raise ValidationError("only the reject-and-halve positivity policy is supported")


class ConvergenceStatus(enum.Enum):
    CONSENSUS = "CONSENSUS"
    NONUNIFORM_STEADY = "NONUNIFORM_STEADY"
    RUNNING = "RUNNING"


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (T, m*N), compartment-major
    energy: np.ndarray
    disagreement: np.ndarray
    min_concentration: np.ndarray
    rate: np.ndarray  # max-norm of Xdot at each sample
    termination: str
    layout: StateLayout
    config: dict = field(default_factory=dict)
    n_rejected: int = 0
    n_positivity_rejections: int = 0

    def __len__(self):
        return self.times.shape[0]

    @property
    def final_state(self):
        return self.states[-1]

    def blocks(self, i=-1):
        return self.layout.blocks(self.states[i])


@dataclass(frozen=True)
class PersistencyReport:
    min_value: float
    time: float
    compartment: int
    species: int
    species_name: str = ""


class _Recorder:
    def __init__(self, sys, layout):
        self.sys = sys
        self.layout = layout
        self.t, self.X, self.G, self.dis, self.xmin, self.rate = [], [], [], [], [], []

    def __call__(self, t, X, Xdot):
        if not np.all(X > 0):
            raise AssertionError("attempted to store a nonpositive state")
        self.t.append(t)
        self.X.append(X.copy())
        self.G.append(total_energy(self.sys, X))
        self.dis.append(disagreement_spread(self.sys, X))
        self.xmin.append(float(X.min()))
        self.rate.append(float(np.max(np.abs(Xdot))))

    def trajectory(self, termination, config, n_rej, n_pos):
        return Trajectory(
            times=np.array(self.t),
            states=np.array(self.X),
            energy=np.array(self.G),
            disagreement=np.array(self.dis),
            min_concentration=np.array(self.xmin),
            rate=np.array(self.rate),
            termination=termination,
            layout=self.layout,
            config=config,
            n_rejected=n_rej,
            n_positivity_rejections=n_pos,
        )


def _make_parts(sys: CompartmentalSystem, schedule):
    """Return the raw explicit part ``N(t, X)`` and linear diffusion operator."""
    N, m = sys.n_compartments, sys.n_species
    xs = sys.x_star_full
    net, kappa = sys.net, sys.bf.kappa
    react = sys.reactions and sys.net.n_reactions > 0
    inv = sys.inv_star0
    lift = sys.trace_lift
    nb = sys.boundary_size

    def explicit(t, X):
        out = np.zeros_like(X)
        if react:
            out += block_reactions(net, kappa, (X / xs).reshape(N, m)).reshape(-1)
        if schedule is not None:
            f = np.asarray(schedule(t), dtype=float).reshape(-1)
            if f.shape != (nb,) or not np.all(np.isfinite(f)):
                raise ValidationError(f"boundary schedule must return {nb} finite values at t={t}")
            out += inv * (lift @ f)
        return out

    return explicit, sys.diffusion_operator()


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)


def _settled(sys, X, Xdot, cfg):
    # nonuniform steady states keep running to t_end
    return (
        np.max(np.abs(Xdot)) * cfg.char_time < cfg.eps_stationary
        and disagreement_spread(sys, X) < cfg.eps_consensus
    )


def _err_norm(err, y0, y1, cfg):
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _integrate_rk45(f, X0, cfg, record, sys_monitor):
    t, X = 0.0, X0.copy()
    k1 = f(t, X)
    record(t, X, k1)
    h = cfg.h_init
    n_rej = n_pos = steps = 0
    termination = "t_end"
    while t < cfg.t_end:
        if steps >= cfg.max_steps:
            raise MaxStepsExceeded(f"reached {cfg.max_steps} steps at t={t:.6g}")
        h = min(h, cfg.t_end - t)
        K = [k1]
        ok = True
        for s in range(1, 7):
            Y = X + h * sum(a * k for a, k in zip(_A[s], K) if a != 0.0)
            if not np.all(Y > 0):
                ok = False
                break
            K.append(f(t + _C[s] * h, Y))
        if not ok:
            n_pos += 1
            h *= 0.5
            if h < cfg.h_min:
                raise StepSizeUnderflow(f"positivity rejections drove h below h_min at t={t:.6g}")
            continue
        Xn = Y  # stage 7 equals the 5th-order solution (FSAL)
        err = _err_norm(h * sum(e * k for e, k in zip(_E, K) if e != 0.0), X, Xn, cfg)
        if err <= 1.0:
            t = t + h
            X = Xn
            k1 = K[6]
            steps += 1
            record(t, X, k1)
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(cfg.h_max, h * fac)
            if cfg.stop_on_steady and _settled(sys_monitor, X, k1, cfg):
                termination = "steady"
                break
        else:
            n_rej += 1
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < cfg.h_min:
                raise StepSizeUnderflow(f"error control drove h below h_min at t={t:.6g}")
    return termination, n_rej, n_pos


class _EulerFactory:
    """Cached factorisations of ``I - h L``."""

    def __init__(self, L):
        self.L = L.tocsc()
        self.I = sp.identity(L.shape[0], format="csc")
        self.cache = {}

    def solve(self, h, rhs):
        lu = self.cache.get(h)
        if lu is None:
            if len(self.cache) > 64:
                self.cache.clear()
            lu = splu((self.I - h * self.L).tocsc())
            self.cache[h] = lu
        return lu.solve(rhs)


def _integrate_semi_implicit(explicit, L, X0, cfg, record, sys_monitor):
    fac_cache = _EulerFactory(L)

    def full(t, X):
        return L @ X + explicit(t, X)

    def euler(t, X, h, n):
        hs = h / n
        Y = X
        for i in range(n):
            Y = fac_cache.solve(hs, Y + hs * explicit(t + i * hs, Y))
            if not np.all(Y > 0):
                return None
        return Y

    t, X = 0.0, X0.copy()
    record(t, X, full(t, X))
    k = max(0, int(np.ceil(np.log2(cfg.h_max / cfg.h_init) - 1e-12)))
    n_rej = n_pos = steps = 0
    termination = "t_end"
    while t < cfg.t_end:
        if steps >= cfg.max_steps:
            raise MaxStepsExceeded(f"reached {cfg.max_steps} steps at t={t:.6g}")
        h = cfg.h_max * 2.0**-k
        if h < cfg.h_min:
            raise StepSizeUnderflow(f"step size fell below h_min at t={t:.6g}")
        last = t + h >= cfg.t_end
        if last:
            h = cfg.t_end - t
        T1, T2, T4 = (euler(t, X, h, n) for n in (1, 2, 4))
        if T1 is None or T2 is None or T4 is None:
            n_pos += 1
            k += 1
            continue
        T22 = 2 * T2 - T1
        T32 = 2 * T4 - T2
        T33 = (4 * T32 - T22) / 3
        if not np.all(T33 > 0):
            n_pos += 1
            k += 1
            continue
        err = _err_norm(T33 - T32, X, T33, cfg)
        fac = 4.0 if err == 0 else 0.9 * err ** (-1 / 3)
        if err <= 1.0:
            t = cfg.t_end if last else t + h
            X = T33
            steps += 1
            Xdot = full(t, X)
            record(t, X, Xdot)
            if fac >= 2.0 and k > 0:
                k -= 1
            elif fac < 1.0:
                k += int(np.ceil(-np.log2(fac)))
            if cfg.stop_on_steady and _settled(sys_monitor, X, Xdot, cfg):
                termination = "steady"
                break
        else:
            n_rej += 1
            k += max(1, int(np.ceil(-np.log2(fac))))
    return termination, n_rej, n_pos


def integrate(
    sys: CompartmentalSystem,
    X0,
    config: Optional[IntegratorConfig] = None,
    schedule: Optional[Callable[[float], np.ndarray]] = None,
) -> Trajectory:
    """Integrate the closed model, or the open model when ``schedule`` gives ``t -> f_b``.

    Every accepted step is stored together with the energy, disagreement
    spread, smallest concentration and derivative norm.

    Raises
    ------
    StepSizeUnderflow
        The step size fell below ``h_min``.
    MaxStepsExceeded
        More than ``max_steps`` accepted steps were needed.
    """
    cfg = config or IntegratorConfig()
    X0 = _require_positive(X0, "X0").copy()
    if X0.shape != (sys.layout.size,):
        raise DimensionMismatch(f"X0 has length {X0.size}, expected {sys.layout.size}")
    explicit, L = _make_parts(sys, schedule)
    rec = _Recorder(sys, sys.layout)
    if cfg.method == "rk45":

        scale = -sys.inv_star0
        inv_xs = 1.0 / sys.x_star_full

        def f(t, X):
            return scale * sys.apply_laplacian(X * inv_xs) + explicit(t, X)

        termination, n_rej, n_pos = _integrate_rk45(f, X0, cfg, rec, sys)
    else:
        termination, n_rej, n_pos = _integrate_semi_implicit(explicit, L, X0, cfg, rec, sys)
    log.debug(
        "integration finished: %s after %d steps (%d rejected, %d positivity)",
        termination, len(rec.t) - 1, n_rej, n_pos,
    )
    return rec.trajectory(termination, asdict(cfg), n_rej, n_pos)


def detect_convergence(
    traj: Trajectory,
    eps_consensus: float = 1e-7,
    eps_stationary: float = 1e-6,
    char_time: float = 1.0,
) -> ConvergenceStatus:
    """Classify the final sample of a trajectory.

    Stationary means ``max|Xdot| * char_time < eps_stationary``; a stationary
    state with disagreement spread below ``eps_consensus`` is a consensus.
    """
    if len(traj) == 0:
        raise ValidationError("empty trajectory")
    if traj.rate[-1] * char_time >= eps_stationary:
        return ConvergenceStatus.RUNNING
    if traj.disagreement[-1] < eps_consensus:
        return ConvergenceStatus.CONSENSUS
    return ConvergenceStatus.NONUNIFORM_STEADY


def monitor_persistency(traj: Trajectory) -> PersistencyReport:
    """Smallest concentration seen along the run and where it occurred."""
    if len(traj) == 0:
        raise ValidationError("empty trajectory")
    flat = int(np.argmin(traj.states))
    i, idx = divmod(flat, traj.states.shape[1])
    j, s = divmod(idx, traj.layout.n_species)
    names = traj.layout.species_names
    report = PersistencyReport(
        min_value=float(traj.states[i, idx]),
        time=float(traj.times[i]),
        compartment=j,
        species=s,
        species_name=names[s] if s < len(names) else "",
    )
    log.info(
        "persistency: min concentration %.6g at t=%.6g (compartment %d, species %d)",
        report.min_value, report.time, j, s,
    )
    return report
