import numpy as np
import pytest

from rdnet import mesh
from rdnet.analysis import (
    PiecewiseLinearSchedule,
    boundary_actuation_experiment,
    conservation_drift,
    lyapunov_report,
    spatial_variance,
    stationarity_residual,
    verify_consensus,
)
from rdnet.compartmental import assemble, moiety_totals, total_energy
from rdnet.crn import ReactionNetwork, balance, compute_limit_point, equilibria_set
from rdnet.errors import NotConverged, ValidationError
from rdnet.integrate import ConvergenceStatus, IntegratorConfig, integrate

from conftest import ab_network


def diffusion_only(D=1.0):
    net = ReactionNetwork(("A",), np.zeros((1, 0)), np.zeros((0, 0)), [], [], [D])
    return net, balance(net)


@pytest.mark.parametrize("method", ["rk45", "semi-implicit"])
def test_verify_consensus(fig1_sys, ab_net, ab_bf, rng, method):
    X0 = rng.uniform(0.1, 10, 8)
    cfg = IntegratorConfig(method=method, stop_on_steady=True)
    rep = verify_consensus(fig1_sys, X0, cfg)
    assert rep.status is ConvergenceStatus.CONSENSUS
    assert rep.final_disagreement < 1e-6
    assert rep.membership_residual < 1e-6
    assert rep.prediction_error < 1e-5
    assert rep.lyapunov_violation <= 10 * cfg.rtol * max(1.0, rep.trajectory.energy[0])
    assert np.all(rep.conservation_drift < 1e-8)
    assert rep.alpha == 1.0
    # A <-> B conserves A + B, so the limit is x* scaled to the mean total
    total = (fig1_sys.volumes @ fig1_sys.layout.blocks(X0)).sum() / fig1_sys.volumes.sum()
    np.testing.assert_allclose(rep.predicted_limit, total / 3 * ab_bf.x_star, rtol=1e-12)
    d = rep.to_dict()
    assert d["status"] == "CONSENSUS" and len(d["simulated_limit"]) == 2


def test_immediate_consensus_at_uniform_equilibrium(fig1_sys, ab_bf):
    X0 = np.tile(2.5 * ab_bf.x_star, 4)
    rep = verify_consensus(fig1_sys, X0)
    assert rep.final_disagreement == 0.0
    assert rep.prediction_error < 1e-12
    assert rep.t_final < 1.0


def test_zero_diffusion_not_converged(ab_bf):
    net = ab_network(diffusion=(0.0, 0.0))
    sys_ = assemble(net, ab_bf, mesh.fig1())
    X0 = np.concatenate([[5.0, 0.5]] * 2 + [[0.2, 3.0]] * 2)
    with pytest.raises(NotConverged) as info:
        verify_consensus(sys_, X0, IntegratorConfig(t_end=40.0, stop_on_steady=True))
    assert info.value.status is ConvergenceStatus.NONUNIFORM_STEADY
    rep = info.value.report
    assert rep.alpha == 0.0
    eq = equilibria_set(net, ab_bf.x_star)
    for x0, x in zip(sys_.layout.blocks(X0), rep.trajectory.blocks()):
        np.testing.assert_allclose(x, compute_limit_point(x0, eq, ab_bf), atol=1e-6)


def test_lyapunov_report(fig1_sys, rng):
    X0 = rng.uniform(0.1, 10, 8)
    tr = integrate(fig1_sys, X0, IntegratorConfig(t_end=10.0))
    rep = lyapunov_report(tr, fig1_sys)
    assert not rep.violated
    assert rep.total_decrease > 0
    assert rep.total_decrease == pytest.approx(rep.endpoint_decrease, abs=1e-10)
    assert rep.slack == 10 * 1e-8 * max(1.0, tr.energy[0])


def test_conservation_drift(fig1_sys, rng):
    tr = integrate(fig1_sys, rng.uniform(0.1, 10, 8), IntegratorConfig(t_end=10.0))
    drift = conservation_drift(fig1_sys, tr)
    assert drift.shape == (1,) and drift[0] < 1e-10


def test_spatial_variance(fig1_sys, ab_bf):
    assert np.array_equal(spatial_variance(fig1_sys, np.tile(ab_bf.x_star, 4)), [0.0, 0.0])
    X = np.tile([1.0, 1.0], 4)
    X[0] = 3.0  # vertex 0 only
    w = fig1_sys.volumes
    xbar = (w[0] * 3 + w[1:].sum()) / w.sum()
    expected = w[0] * (3 - xbar) ** 2 + w[1:].sum() * (1 - xbar) ** 2
    np.testing.assert_allclose(spatial_variance(fig1_sys, X), [expected, 0.0], rtol=1e-14)
    stacked = spatial_variance(fig1_sys, np.vstack([X, X]))
    assert stacked.shape == (2, 2)


def test_stationarity_residual(fig1_sys, ab_bf):
    assert stationarity_residual(fig1_sys, np.tile(ab_bf.x_star, 4)) == 0.0


def test_zero_schedule_equals_closed_run(fig1_sys, rng):
    X0 = rng.uniform(0.1, 10, 8)
    cfg = IntegratorConfig(t_end=3.0)
    closed = integrate(fig1_sys, X0, cfg)
    tr, var = boundary_actuation_experiment(fig1_sys, np.zeros(8), cfg, X0)
    assert np.array_equal(tr.states, closed.states)
    assert var.shape == (len(tr), 2)


def test_constant_influx_grows_mass_linearly():
    net, bf = diffusion_only(0.7)
    sys_ = assemble(net, bf, mesh.fig1())
    f = np.array([0.3, 0.1, 0.2, 0.4])
    tr, _ = boundary_actuation_experiment(sys_, f, IntegratorConfig(t_end=4.0))
    mass = tr.states @ sys_.volumes
    np.testing.assert_allclose(mass, mass[0] + f.sum() * tr.times, rtol=1e-10)


def test_periodic_schedule_stays_bounded():
    net, bf = diffusion_only(1.0)
    sys_ = assemble(net, bf, mesh.interval(9, 1.0))
    # opposite, zero-mean fluxes at the two ends
    sched = lambda t: 0.2 * np.sin(2 * np.pi * t) * np.array([1.0, -1.0])  # noqa: E731
    tr, var = boundary_actuation_experiment(sys_, sched, IntegratorConfig(t_end=10.0, h_max=0.05))
    assert np.all(tr.states > 0)
    late = var[tr.times > 5.0, 0]
    early = var[(tr.times > 0.0) & (tr.times <= 5.0), 0]
    assert late.max() <= 1.1 * early.max()
    mass = tr.states @ sys_.volumes
    assert np.max(np.abs(mass - mass[0])) < 0.1


def test_piecewise_linear_schedule():
    s = PiecewiseLinearSchedule([0.0, 1.0, 3.0], [[0.0, 1.0], [2.0, 1.0], [0.0, 1.0]])
    np.testing.assert_allclose(s(0.5), [1.0, 1.0])
    np.testing.assert_allclose(s(2.0), [1.0, 1.0])
    np.testing.assert_allclose(s(10.0), [0.0, 1.0])
    np.testing.assert_allclose(PiecewiseLinearSchedule([0.0], [[4.0]])(7.0), [4.0])
    with pytest.raises(ValidationError):
        PiecewiseLinearSchedule([1.0, 0.0], [[0.0], [1.0]])
    with pytest.raises(ValidationError):
        PiecewiseLinearSchedule([0.0, 1.0], [[0.0]])


def test_closed_run_moieties_and_energy(rng):
    # A + B <-> C on a strip; two moieties, energy decreasing to zero at x*
    net = ReactionNetwork.from_reactions(["A", "B", "C"], [({"A": 1, "B": 1}, {"C": 1}, 1.0, 2.0)],
                                         (1.0, 0.5, 0.2))
    bf = balance(net)
    sys_ = assemble(net, bf, mesh.equilateral_strip(1, 3))
    X0 = rng.uniform(0.5, 3, sys_.layout.size)
    rep = verify_consensus(sys_, X0)
    assert sys_.moieties.shape[0] == 2
    np.testing.assert_allclose(moiety_totals(sys_, rep.trajectory.final_state), moiety_totals(sys_, X0),
                               rtol=1e-9)
    assert total_energy(sys_, rep.trajectory.final_state) < total_energy(sys_, X0)
    assert rep.prediction_error < 1e-5
