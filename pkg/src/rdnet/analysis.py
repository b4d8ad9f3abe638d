"""Verification reports built on top of simulations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compartmental import (
    CompartmentalSystem,
    closed_rhs,
    moiety_totals,
    total_energy,
    weighted_mean,
)
from .crn import (
    compute_limit_point,
    conserved_moieties,
    equilibria_set,
    equilibrium_residual,
)
from .errors import NotConverged, ValidationError
from .integrate import (
    ConvergenceStatus,
    IntegratorConfig,
    Trajectory,
    detect_convergence,
    integrate,
)

__all__ = [
    "conserved_moieties",
    "ConsensusReport",
    "LyapunovReport",
    "verify_consensus",
    "lyapunov_report",
    "conservation_drift",
    "spatial_variance",
    "boundary_actuation_experiment",
]


@dataclass
class LyapunovReport:
    max_increase: float
    total_decrease: float
    endpoint_decrease: float  # recomputed from the endpoint states
    slack: float
    violated: bool


@dataclass
class ConsensusReport:
    status: ConvergenceStatus
    final_disagreement: float
    membership_residual: float
    simulated_limit: np.ndarray
    predicted_limit: np.ndarray
    prediction_error: float
    lyapunov_violation: float
    conservation_drift: np.ndarray
    alpha: float
    t_final: float
    trajectory: Trajectory = field(repr=False, default=None)

    def to_dict(self):
        return {
            "status": self.status.value,
            "final_disagreement": self.final_disagreement,
            "membership_residual": self.membership_residual,
            "simulated_limit": self.simulated_limit.tolist(),
            "predicted_limit": self.predicted_limit.tolist(),
            "prediction_error": self.prediction_error,
            "lyapunov_violation": self.lyapunov_violation,
            "conservation_drift": self.conservation_drift.tolist(),
            "alpha": self.alpha,
            "t_final": self.t_final,
        }


def conservation_drift(sys: CompartmentalSystem, traj: Trajectory) -> np.ndarray:
    """Relative change of every moiety total between the first and last sample."""
    m0 = moiety_totals(sys, traj.states[0])
    m1 = moiety_totals(sys, traj.states[-1])
    return np.abs(m1 - m0) / np.maximum(np.abs(m0), np.finfo(float).tiny)


def lyapunov_report(traj: Trajectory, sys: CompartmentalSystem, rtol: float | None = None) -> LyapunovReport:
    G = traj.energy
    if rtol is None:
        rtol = traj.config.get("rtol", IntegratorConfig.rtol)
    slack = 10 * rtol * max(1.0, G[0])
    max_inc = float(np.max(np.diff(G))) if G.size > 1 else 0.0
    return LyapunovReport(
        max_increase=max_inc,
        total_decrease=float(G[0] - G[-1]),
        endpoint_decrease=total_energy(sys, traj.states[0]) - total_energy(sys, traj.states[-1]),
        slack=slack,
        violated=max_inc > slack,
    )


def verify_consensus(
    sys: CompartmentalSystem,
    X0,
    config: IntegratorConfig | None = None,
    eps_consensus: float = 1e-7,
    eps_stationary: float = 1e-6,
) -> ConsensusReport:
    """Simulate the closed model and compare its limit with the free-energy prediction.

    The prediction minimises the Gibbs energy over the compatibility class of
    the volume-weighted mean initial state; the simulated limit is the
    volume-weighted mean of the final state.

    Raises
    ------
    NotConverged
        The run ended without reaching CONSENSUS.  ``status`` carries the
        detected status and ``report`` the partially filled report.
    """
    if config is None:
        config = IntegratorConfig(stop_on_steady=True, eps_consensus=eps_consensus,
                                  eps_stationary=eps_stationary)
    X0 = np.asarray(X0, dtype=float)
    traj = integrate(sys, X0, config)
    status = detect_convergence(traj, eps_consensus, eps_stationary, config.char_time)

    eq = equilibria_set(sys.net, sys.bf.x_star)
    x_hat = weighted_mean(sys, X0)
    predicted = compute_limit_point(x_hat, eq, sys.bf)
    simulated = weighted_mean(sys, traj.final_state)
    report = ConsensusReport(
        status=status,
        final_disagreement=float(traj.disagreement[-1]),
        membership_residual=equilibrium_residual(simulated, eq),
        simulated_limit=simulated,
        predicted_limit=predicted,
        prediction_error=float(np.max(np.abs(simulated - predicted))),
        lyapunov_violation=max(0.0, lyapunov_report(traj, sys, config.rtol).max_increase),
        conservation_drift=conservation_drift(sys, traj),
        alpha=sys.alpha,
        t_final=float(traj.times[-1]),
        trajectory=traj,
    )
    if status is not ConvergenceStatus.CONSENSUS:
        raise NotConverged(
            f"closed run ended with status {status.value} at t={report.t_final:.6g}",
            status=status,
            report=report,
        )
    return report


def spatial_variance(sys: CompartmentalSystem, X) -> np.ndarray:
    """Per-species ``sum_j |*v_j| (x^j - xbar)^2`` with xbar the weighted mean."""
    X = np.asarray(X, dtype=float)
    x = sys.layout.blocks(X)
    w = sys.volumes
    if X.ndim == 1:
        xbar = (w @ x) / w.sum()
        return w @ (x - xbar) ** 2
    xbar = np.einsum("j,tji->ti", w, x) / w.sum()
    return np.einsum("j,tji->ti", w, (x - xbar[:, None, :]) ** 2)


def boundary_actuation_experiment(sys: CompartmentalSystem, schedule, config=None, X0=None):
    """Run the open model under a flux schedule ``t -> f_b``.

    Returns the trajectory and the spatial-variance series (T x m).  With no
    ``X0`` the run starts from the uniform equilibrium ``x*``.
    """
    if not callable(schedule):
        const = np.asarray(schedule, dtype=float)
        schedule = lambda t: const  # noqa: E731
    if X0 is None:
        X0 = sys.x_star_full
    traj = integrate(sys, X0, config, schedule=schedule)
    return traj, spatial_variance(sys, traj.states)


def stationarity_residual(sys: CompartmentalSystem, X) -> float:
    return float(np.max(np.abs(closed_rhs(sys, X))))


class PiecewiseLinearSchedule:
    """Boundary flux interpolated linearly between knots, held constant outside."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.times.ndim != 1 or self.values.shape[0] != self.times.size:
            raise ValidationError("schedule needs one flux row per knot time")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValidationError("schedule knot times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("schedule values must be finite")

    def __call__(self, t):
        if self.times.size == 1:
            return self.values[0]
        return np.array([np.interp(t, self.times, col) for col in self.values.T])
