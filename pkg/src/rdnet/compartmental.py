"""Compartmental reaction-diffusion ODEs on a simplicial mesh.

Open model::

    Xdot = -(star0^-1 x I_m) (Delta_d X/X* - (tr x I_m)^T f_b) + F(X)
    e_b  = (tr x I_m) X/X*

The closed model sets ``f_b = 0``.  States are compartment-major:
``X = (x^1; ...; x^N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .crn import (
    BalancedForm,
    ReactionNetwork,
    _require_positive,
    conserved_moieties,
    stoichiometric_matrix,
)
from .errors import DimensionMismatch, ValidationError
from .mesh import (
    Operators,
    SimplicialComplex,
    circumcentric_dual,
    laplacian,
    operators,
    replicate_diffusion,
)


@dataclass(frozen=True)
class StateLayout:
    """Compartment-major layout of the concatenated state."""

    n_compartments: int
    n_species: int
    species_names: tuple = ()

    @property
    def size(self):
        return self.n_compartments * self.n_species

    def index(self, compartment: int, species: int) -> int:
        return compartment * self.n_species + species

    def blocks(self, X) -> np.ndarray:
        """View ``X`` as an (N, m) array, one row per compartment."""
        X = np.asarray(X)
        if X.shape[-1] != self.size:
            raise DimensionMismatch(f"state has length {X.shape[-1]}, expected {self.size}")
        return X.reshape(X.shape[:-1] + (self.n_compartments, self.n_species))

    def stack(self, blocks) -> np.ndarray:
        blocks = np.asarray(blocks, dtype=float)
        if blocks.ndim == 1:
            blocks = np.tile(blocks, (self.n_compartments, 1))
        if blocks.shape != (self.n_compartments, self.n_species):
            raise DimensionMismatch(
                f"expected {self.n_compartments} blocks of {self.n_species} species, got {blocks.shape}"
            )
        return blocks.reshape(-1).copy()


@dataclass(frozen=True, eq=False)
class BoundarySignals:
    f_hat_b: np.ndarray
    e_b: np.ndarray


@dataclass(frozen=True, eq=False)
class CompartmentalSystem:
    net: ReactionNetwork
    bf: BalancedForm
    mesh: SimplicialComplex
    ops: Operators
    layout: StateLayout
    R_d: np.ndarray
    delta: sp.csr_matrix
    d_lift: sp.csr_matrix  # d x I_m
    edge_weights: np.ndarray  # (star1 x I_m) R_d diagonal
    inv_star0: np.ndarray  # diagonal of (star0^-1 x I_m)
    trace_lift: sp.csr_matrix  # (tr x I_m)^T
    moieties: np.ndarray
    reactions: bool = True

    @property
    def n_compartments(self):
        return self.layout.n_compartments

    @property
    def n_species(self):
        return self.layout.n_species

    @property
    def volumes(self):
        return self.ops.star0

    @property
    def x_star_full(self):
        return np.tile(self.bf.x_star, self.n_compartments)

    @property
    def alpha(self):
        """Smallest energy-diffusion entry (the coercivity constant of R_d)."""
        return float(self.R_d.min()) if self.R_d.size else 0.0

    @property
    def boundary_size(self):
        return self.trace_lift.shape[1]

    def apply_laplacian(self, U) -> np.ndarray:
        """``Delta_d @ U`` in factored form; exactly zero on uniform U."""
        return self.d_lift.T @ (self.edge_weights * (self.d_lift @ U))

    def diffusion_operator(self) -> sp.csr_matrix:
        """Linear map ``X -> -(star0^-1 x I) Delta_d diag(1/X*) X``."""
        return (sp.diags(-self.inv_star0) @ self.delta @ sp.diags(1.0 / self.x_star_full)).tocsr()


def assemble(
    net: ReactionNetwork,
    bf: BalancedForm,
    mesh: SimplicialComplex,
    diffusion=None,
    *,
    R_d=None,
    reactions: bool = True,
    ops: Operators | None = None,
) -> CompartmentalSystem:
    """Precompute the operators of the compartmental model.

    ``diffusion`` (one coefficient per species, default ``net.diffusion``)
    is replicated over edges to form R_d.  Passing ``R_d`` directly (length
    ``m * N_e``, edge-major) overrides it.  ``reactions=False`` switches the
    reaction term off, leaving pure diffusion with boundary ports.
    """
    m = net.n_species
    if bf.x_star.shape != (m,):
        raise DimensionMismatch("balanced form does not match the network")
    if ops is None:
        ops = operators(mesh, circumcentric_dual(mesh))
    N = mesh.n_vertices
    if R_d is None:
        D = net.diffusion if diffusion is None else np.asarray(diffusion, dtype=float)
        if D.shape != (m,):
            raise DimensionMismatch(f"diffusion needs {m} coefficients")
        if np.any(~(D >= 0)):
            raise ValidationError("diffusion coefficients must be nonnegative")
        R_d = replicate_diffusion(D, mesh.n_edges)
    R_d = np.array(R_d, dtype=float).reshape(-1)
    delta = laplacian(mesh, ops, R_d, m)
    uniform = np.ones(N * m)
    if np.max(np.abs(delta @ uniform), initial=0.0) > 1e-12 * max(1.0, abs(delta).max()):
        raise ValidationError("assembled Laplacian does not annihilate uniform states")
    R_d.setflags(write=False)
    d_lift = sp.kron(ops.d, sp.identity(m), format="csr")
    edge_weights = np.repeat(ops.star1, m) * R_d
    edge_weights.setflags(write=False)
    inv_star0 = np.repeat(1.0 / ops.star0, m)
    inv_star0.setflags(write=False)
    trace_lift = sp.kron(ops.tr, sp.identity(m), format="csr").T.tocsr()
    moieties = conserved_moieties(stoichiometric_matrix(net))
    moieties.setflags(write=False)
    return CompartmentalSystem(
        net=net,
        bf=bf,
        mesh=mesh,
        ops=ops,
        layout=StateLayout(N, m, net.species_names),
        R_d=R_d,
        delta=delta,
        d_lift=d_lift,
        edge_weights=edge_weights,
        inv_star0=inv_star0,
        trace_lift=trace_lift,
        moieties=moieties,
        reactions=reactions,
    )


def block_reactions(net, kappa, U):
    """Rows of ``-Z B K B^T Exp(Z^T Ln u)`` for each row u of ``U``.

    Evaluated right to left, so a uniform complex vector gives an exact zero.
    """
    Y = np.exp(np.log(U) @ net.Z)
    B = net.B.astype(float)
    return -((Y @ B) * kappa) @ B.T @ net.Z.T


def reaction_field_all(sys: CompartmentalSystem, X) -> np.ndarray:
    """Blockwise reaction kinetics ``F(X) = (f(x^1); ...; f(x^N))``."""
    X = _require_positive(X, "X")
    if not sys.reactions or sys.net.n_reactions == 0:
        return np.zeros_like(X)
    U = sys.layout.blocks(X) / sys.bf.x_star
    return block_reactions(sys.net, sys.bf.kappa, U).reshape(-1)


def disagreement(sys: CompartmentalSystem, X) -> np.ndarray:
    X = _require_positive(X, "X")
    if X.shape != (sys.layout.size,):
        raise DimensionMismatch(f"state has length {X.shape}, expected {sys.layout.size}")
    return X / sys.x_star_full


def _check_flux(sys, f_hat_b):
    f = np.asarray(f_hat_b, dtype=float).reshape(-1)
    if f.shape != (sys.boundary_size,):
        raise DimensionMismatch(f"boundary flux needs {sys.boundary_size} entries, got {f.size}")
    if not np.all(np.isfinite(f)):
        raise ValidationError("boundary flux must be finite")
    return f


def open_rhs(sys: CompartmentalSystem, X, f_hat_b):
    """State derivative and boundary effort of the open model."""
    U = disagreement(sys, X)
    f = _check_flux(sys, f_hat_b)
    Xdot = -sys.inv_star0 * (sys.apply_laplacian(U) - sys.trace_lift @ f) + reaction_field_all(sys, X)
    e_b = sys.trace_lift.T @ U
    return Xdot, e_b


def open_port(sys: CompartmentalSystem, X, f_hat_b) -> BoundarySignals:
    _, e_b = open_rhs(sys, X, f_hat_b)
    return BoundarySignals(f_hat_b=_check_flux(sys, f_hat_b), e_b=e_b)


def closed_rhs(sys: CompartmentalSystem, X) -> np.ndarray:
    return open_rhs(sys, X, np.zeros(sys.boundary_size))[0]


def total_energy(sys: CompartmentalSystem, X) -> float:
    """Dual-volume weighted sum of compartment Gibbs energies."""
    X = _require_positive(X, "X")
    x = sys.layout.blocks(X)
    xs = sys.bf.x_star
    g = np.sum(x * np.log(x / xs) + (xs - x), axis=1)
    return float(sys.volumes @ g)


def energy_rate(sys: CompartmentalSystem, X, Xdot) -> float:
    """``sum_j |*v_j| Ln(x^j/x*)^T xdot^j``."""
    lnU = np.log(disagreement(sys, X))
    return float(np.sum(np.repeat(sys.volumes, sys.n_species) * lnU * Xdot))


def moiety_totals(sys: CompartmentalSystem, X) -> np.ndarray:
    """``M_w(X) = sum_j |*v_j| w^T x^j`` for each conserved moiety w."""
    x = sys.layout.blocks(np.asarray(X, dtype=float))
    return (sys.volumes @ x) @ sys.moieties.T.astype(float)


def weighted_mean(sys: CompartmentalSystem, X) -> np.ndarray:
    x = sys.layout.blocks(np.asarray(X, dtype=float))
    return (sys.volumes @ x) / sys.volumes.sum()


def disagreement_spread(sys: CompartmentalSystem, X) -> float:
    """``max_{j,i} |x^j_i/x*_i - mean_j(x^j_i/x*_i)|``."""
    U = sys.layout.blocks(np.asarray(X, dtype=float) / sys.x_star_full)
    return float(np.max(np.abs(U - U.mean(axis=0))))
