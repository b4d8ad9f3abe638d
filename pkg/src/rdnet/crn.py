"""Balanced mass-action reaction networks.

A network is given by its complex stoichiometric matrix ``Z`` (m x c), the
incidence matrix ``B`` (c x r) of the complex graph, and conventional
forward/backward rate constants.  Once a thermodynamic equilibrium ``x*`` is
known the kinetics take the balanced form

    xdot = -Z B K(x*) B^T Exp(Z^T Ln(x / x*)),

with ``K(x*)`` the diagonal matrix of balanced reaction constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import Sequence

import numpy as np

from .errors import DomainError, NoConvergence, NotDetailedBalanced, ValidationError

#: relative tolerance for forward/backward agreement of balanced constants
DETAILED_BALANCE_RTOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _require_positive(x, what="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        bad = np.flatnonzero(~(x > 0))
        raise DomainError(f"{what} must be strictly positive; offending indices {bad.tolist()}")
    return x


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    """Reversible reaction network with conventional rate data.

    Parameters
    ----------
    species_names
        Labels of the m species.
    Z
        m x c complex stoichiometric matrix (nonnegative integers).
    B
        c x r incidence matrix; column j holds -1 at the source complex and
        +1 at the product complex of reaction j.
    k_fwd, k_bwd
        Forward and backward mass-action constants, strictly positive.
    diffusion
        One nonnegative diffusion coefficient per species.
    """

    species_names: tuple
    Z: np.ndarray
    B: np.ndarray
    k_fwd: np.ndarray
    k_bwd: np.ndarray
    diffusion: np.ndarray
    complex_names: tuple = field(default=())

    def __post_init__(self):
        names = tuple(str(s) for s in self.species_names)
        m = len(names)
        Z = np.array(self.Z)
        if Z.size == 0:
            Z = Z.reshape(m, 0 if Z.ndim < 2 else Z.shape[1])
        if Z.ndim != 2 or Z.shape[0] != m:
            raise ValidationError(f"Z must be {m} x c, got shape {Z.shape}")
        if not np.all(np.isfinite(Z)) or np.any(Z != np.round(Z)) or np.any(Z < 0):
            raise ValidationError("Z entries must be nonnegative integers")
        Z = Z.astype(np.int64)
        c = Z.shape[1]
        if c and np.any(Z.sum(axis=0) == 0):
            j = int(np.flatnonzero(Z.sum(axis=0) == 0)[0])
            raise ValidationError(f"complex {j} is the empty complex, which is not supported")

        B = np.array(self.B)
        if B.size == 0:
            B = B.reshape(c, 0 if B.ndim < 2 else B.shape[1])
        if B.ndim != 2 or B.shape[0] != c:
            raise ValidationError(f"B must be {c} x r, got shape {B.shape}")
        B = B.astype(np.int64) if np.all(B == np.round(B)) else B
        for j in range(B.shape[1]):
            col = B[:, j]
            if not (np.sum(col == 1) == 1 and np.sum(col == -1) == 1 and np.sum(col != 0) == 2):
                raise ValidationError(f"column {j} of B must contain exactly one +1 and one -1")
        r = B.shape[1]

        kf = np.array(self.k_fwd, dtype=float).reshape(-1)
        kb = np.array(self.k_bwd, dtype=float).reshape(-1)
        if kf.shape != (r,) or kb.shape != (r,):
            raise ValidationError(f"k_fwd and k_bwd must have length r = {r}")
        if np.any(~(kf > 0)) or np.any(~(kb > 0)) or not np.all(np.isfinite(kf * kb)):
            raise ValidationError("rate constants must be strictly positive and finite")

        D = np.array(self.diffusion, dtype=float).reshape(-1)
        if D.shape != (m,):
            raise ValidationError(f"diffusion must have length m = {m}")
        if np.any(~(D >= 0)) or not np.all(np.isfinite(D)):
            raise ValidationError("diffusion coefficients must be nonnegative and finite")

        cnames = tuple(str(s) for s in self.complex_names) or tuple(f"C{j}" for j in range(c))
        if len(cnames) != c:
            raise ValidationError("complex_names must have one entry per column of Z")

        set_ = object.__setattr__
        set_(self, "species_names", names)
        set_(self, "complex_names", cnames)
        set_(self, "Z", _frozen(Z, np.int64))
        set_(self, "B", _frozen(B, np.int64))
        set_(self, "k_fwd", _frozen(kf))
        set_(self, "k_bwd", _frozen(kb))
        set_(self, "diffusion", _frozen(D))

    @property
    def n_species(self):
        return self.Z.shape[0]

    @property
    def n_complexes(self):
        return self.Z.shape[1]

    @property
    def n_reactions(self):
        return self.B.shape[1]

    @property
    def source(self):
        """Index of the source complex of every reaction."""
        return np.argmin(self.B, axis=0) if self.n_reactions else np.zeros(0, dtype=int)

    @property
    def product(self):
        return np.argmax(self.B, axis=0) if self.n_reactions else np.zeros(0, dtype=int)

    @classmethod
    def from_reactions(cls, species, reactions, diffusion=None):
        """Build a network from ``(source, product, k_fwd, k_bwd)`` tuples.

        ``source`` and ``product`` are mappings species -> coefficient.
        Identical complexes are merged, in order of first appearance.

        >>> net = ReactionNetwork.from_reactions(["A", "B"], [({"A": 1}, {"B": 1}, 2.0, 1.0)])
        >>> net.Z.tolist(), net.B.tolist()
        ([[1, 0], [0, 1]], [[-1], [1]])
        """
        species = list(species)
        index = {s: i for i, s in enumerate(species)}
        complexes: list[tuple] = []
        src_idx, prod_idx, kf, kb = [], [], [], []

        def lookup(cplx):
            vec = [0] * len(species)
            for s, coef in cplx.items():
                if s not in index:
                    raise ValidationError(f"unknown species {s!r}")
                vec[index[s]] = coef
            vec = tuple(vec)
            if vec not in complexes:
                complexes.append(vec)
            return complexes.index(vec)

        for src, prod, f, b in reactions:
            src_idx.append(lookup(src))
            prod_idx.append(lookup(prod))
            kf.append(f)
            kb.append(b)
        m, c, r = len(species), len(complexes), len(src_idx)
        Z = np.array(complexes, dtype=np.int64).T.reshape(m, c)
        B = np.zeros((c, r), dtype=np.int64)
        for j, (s, p) in enumerate(zip(src_idx, prod_idx)):
            B[s, j] -= 1
            B[p, j] += 1
        if diffusion is None:
            diffusion = np.zeros(m)
        return cls(tuple(species), Z, B, kf, kb, diffusion)


@dataclass(frozen=True, eq=False)
class BalancedForm:
    """Thermodynamic equilibrium together with the balanced rate constants."""

    x_star: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        x = _require_positive(self.x_star, "x_star")
        k = np.asarray(self.kappa, dtype=float)
        if np.any(~(k > 0)):
            raise ValidationError("balanced constants must be strictly positive")
        object.__setattr__(self, "x_star", _frozen(x))
        object.__setattr__(self, "kappa", _frozen(k))


@dataclass(frozen=True, eq=False)
class EquilibriaSet:
    """The set of positive x with S^T Ln x = S^T Ln x*."""

    S: np.ndarray
    x_star: np.ndarray
    kernel_basis: np.ndarray  # rows are conserved moieties w, S^T w = 0


def stoichiometric_matrix(net: ReactionNetwork) -> np.ndarray:
    """Return ``S = Z B`` in integer arithmetic."""
    return net.Z @ net.B


def conserved_moieties(S) -> np.ndarray:
    """Integer basis of ker(S^T), one moiety per row.

    Uses fraction-free Gauss-Jordan elimination on the integer matrix S^T,
    so every basis vector satisfies ``w @ S == 0`` exactly.  Vectors are
    primitive (gcd 1) with a positive leading entry; they are ordered by the
    free column that generates them.
    """
    S = np.asarray(S)
    m = S.shape[0]
    if np.any(S != np.round(S)):
        raise ValidationError("conserved_moieties expects an integer matrix")
    rows = [[int(v) for v in row] for row in S.T.tolist()]
    pivots = []
    r = 0
    for col in range(m):
        p = next((i for i in range(r, len(rows)) if rows[i][col] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        piv = rows[r]
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                a, b = piv[col], rows[i][col]
                new = [a * x - b * y for x, y in zip(rows[i], piv)]
                g = 0
                for v in new:
                    g = gcd(g, v)
                rows[i] = [v // g for v in new] if g > 1 else new
        pivots.append(col)
        r += 1
        if r == len(rows):
            break
    free = [j for j in range(m) if j not in pivots]
    basis = []
    for f in free:
        w = [Fraction(0)] * m
        w[f] = Fraction(1)
        for k, pc in enumerate(pivots):
            w[pc] = Fraction(-rows[k][f], rows[k][pc])
        den = 1
        for v in w:
            den = den * v.denominator // gcd(den, v.denominator)
        iw = [int(v * den) for v in w]
        g = 0
        for v in iw:
            g = gcd(g, v)
        iw = [v // g for v in iw]
        lead = next(v for v in iw if v != 0)
        if lead < 0:
            iw = [-v for v in iw]
        basis.append(iw)
    return np.array(basis, dtype=np.int64).reshape(len(basis), m)


def equilibria_set(net: ReactionNetwork, x_star) -> EquilibriaSet:
    S = stoichiometric_matrix(net)
    return EquilibriaSet(
        S=_frozen(S, np.int64),
        x_star=_frozen(_require_positive(x_star, "x_star")),
        kernel_basis=_frozen(conserved_moieties(S), np.int64),
    )


def find_thermodynamic_equilibrium(net: ReactionNetwork, tol: float = 1e-10) -> np.ndarray:
    """Solve ``S^T Ln x* = Ln(k_fwd / k_bwd)`` for the minimum-norm ``Ln x*``.

    Raises
    ------
    NotDetailedBalanced
        If the least-squares residual exceeds ``tol``; the equilibrium
        constants are then inconsistent around some cycle of the network.
    """
    S = stoichiometric_matrix(net).astype(float)
    m = net.n_species
    if net.n_reactions == 0:
        return np.ones(m)
    ln_keq = np.log(net.k_fwd) - np.log(net.k_bwd)
    y, *_ = np.linalg.lstsq(S.T, ln_keq, rcond=None)
    residual = float(np.max(np.abs(S.T @ y - ln_keq)))
    if residual > tol:
        raise NotDetailedBalanced(
            f"rate constants are not detailed balanced: residual {residual:.3e} > {tol:.1e}"
        )
    return np.exp(y)


def balanced_rate_constants(net: ReactionNetwork, x_star) -> np.ndarray:
    """Balanced constants ``kappa_j = k_fwd_j * prod(x*^Z_src)``.

    The backward expression ``k_bwd_j * prod(x*^Z_prod)`` must agree to a
    relative tolerance of 1e-10.
    """
    x_star = _require_positive(x_star, "x_star")
    lnx = np.log(x_star)
    zl = net.Z.T @ lnx
    fwd = net.k_fwd * np.exp(zl[net.source])
    bwd = net.k_bwd * np.exp(zl[net.product])
    rel = np.abs(fwd - bwd) / np.maximum(np.abs(fwd), np.abs(bwd))
    if np.any(rel > DETAILED_BALANCE_RTOL):
        j = int(np.argmax(rel))
        raise NotDetailedBalanced(
            f"x_star is not a thermodynamic equilibrium: reaction {j} has forward flux "
            f"{fwd[j]:.17g} and backward flux {bwd[j]:.17g}"
        )
    return fwd


def balance(net: ReactionNetwork, x_star=None, tol: float = 1e-10) -> BalancedForm:
    """Convenience wrapper returning the balanced form of ``net``."""
    if x_star is None:
        x_star = find_thermodynamic_equilibrium(net, tol)
    return BalancedForm(np.asarray(x_star, dtype=float), balanced_rate_constants(net, x_star))


def reaction_vector_field(bf: BalancedForm, net: ReactionNetwork, x) -> np.ndarray:
    x = _require_positive(x)
    B = net.B.astype(float)
    L = B @ np.diag(bf.kappa) @ B.T
    return -net.Z @ (L @ np.exp(net.Z.T @ np.log(x / bf.x_star)))


def mass_action_field(net: ReactionNetwork, x) -> np.ndarray:
    """Conventional reversible mass-action rate sum_j S_j (k_f prod x^src - k_b prod x^prod)."""
    x = _require_positive(x)
    S = stoichiometric_matrix(net)
    mono = np.prod(x[:, None] ** net.Z, axis=0)
    flux = net.k_fwd * mono[net.source] - net.k_bwd * mono[net.product]
    return S @ flux


def gibbs_free_energy(x, x_star) -> float:
    x = _require_positive(x)
    x_star = np.asarray(x_star, dtype=float)
    return float(x @ np.log(x / x_star) + np.sum(x_star - x))


def gibbs_gradient(x, x_star) -> np.ndarray:
    x = _require_positive(x)
    return np.log(x / np.asarray(x_star, dtype=float))


def is_equilibrium(x_cand, eq: EquilibriaSet, tol: float = 1e-10) -> bool:
    x_cand = _require_positive(x_cand, "x_cand")
    return equilibrium_residual(x_cand, eq) <= tol


def equilibrium_residual(x, eq: EquilibriaSet) -> float:
    """``max |S^T (Ln x - Ln x*)|``; zero on the equilibria set."""
    x = _require_positive(x)
    if eq.S.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(eq.S.T @ (np.log(x) - np.log(eq.x_star)))))


def _range_basis(S):
    """Orthonormal basis for im(S)."""
    if S.shape[1] == 0:
        return np.zeros((S.shape[0], 0))
    U, s, _ = np.linalg.svd(S.astype(float), full_matrices=False)
    rank = int(np.sum(s > s.max() * max(S.shape) * np.finfo(float).eps)) if s.size else 0
    return U[:, :rank]


def compute_limit_point(
    x0,
    eq: EquilibriaSet,
    bf: BalancedForm | None = None,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> np.ndarray:
    """Minimise the Gibbs free energy over the compatibility class ``x0 + im S``.

    Damped Newton iteration in reduced coordinates ``x = x0 + Q xi`` with Q an
    orthonormal basis of im S; steps are halved until the iterate stays
    positive and the energy (or, near roundoff level, the gradient) decreases.

    Returns the unique positive minimiser, which lies in the equilibria set
    and shares every moiety value with ``x0``.
    """
    x0 = _require_positive(x0, "x0")
    x_star = eq.x_star if bf is None else bf.x_star
    Q = _range_basis(eq.S)
    S = eq.S.astype(float)

    def residual(x):
        return float(np.max(np.abs(S.T @ np.log(x / x_star)))) if S.shape[1] else 0.0

    x = x0.copy()
    res = residual(x)
    if Q.shape[1] == 0 or res <= tol:
        return x
    for _ in range(max_iter):
        g = Q.T @ np.log(x / x_star)
        H = Q.T @ (Q / x[:, None])
        step = np.linalg.solve(H, -g)
        dx = Q @ step
        G0 = gibbs_free_energy(x, x_star)
        gnorm = np.linalg.norm(g)
        t = 1.0
        for _ in range(60):
            xn = x + t * dx
            if np.all(xn > 0):
                Gn = gibbs_free_energy(xn, x_star)
                if Gn <= G0 + 1e-4 * t * (g @ step) or np.linalg.norm(Q.T @ np.log(xn / x_star)) < gnorm:
                    break
            t *= 0.5
        else:
            raise NoConvergence("line search failed to find a positive descent step", residual=res)
        x = xn
        res = residual(x)
        if res <= tol:
            return x
    raise NoConvergence(
        f"Newton iteration did not converge in {max_iter} iterations (residual {res:.3e})",
        residual=res,
    )


__all__ = [
    "ReactionNetwork",
    "BalancedForm",
    "EquilibriaSet",
    "stoichiometric_matrix",
    "conserved_moieties",
    "equilibria_set",
    "find_thermodynamic_equilibrium",
    "balanced_rate_constants",
    "balance",
    "reaction_vector_field",
    "mass_action_field",
    "gibbs_free_energy",
    "gibbs_gradient",
    "is_equilibrium",
    "equilibrium_residual",
    "compute_limit_point",
]
