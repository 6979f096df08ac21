"""Boundary influence and eigenvalue movement for an unchanged isolated block.

Setting: a block ``B`` is isolated at scale ``k - 1`` and still the same set at
scale ``k``, so it carries two collars ``C1 = collar_{k-1}`` and
``C2 = collar_k`` with ``C1`` inside ``C2``. Growing the collar from ``C1`` to
``C2`` changes the localized operator by

    Delta F = F1(lam) - F2(lam) = Gt^T Gamma [d^{-1}]_{OO} Gamma^T Gt,

where ``O = C2 \\ C1``, ``d = H[C2 \\ B] - lam``, ``Gt`` maps block amplitudes to
``C1 \\ B`` and ``Gamma`` is the hopping between ``C1`` and ``O``. Only sites
``y`` of ``O`` next to ``C1`` enter, through the coupling vectors

    a_beta(y) = sum_{x in C1, |x - y| = 1} (G phi_beta)(x),

for the eigenvectors ``phi_beta`` of ``F1(lam)``. The site maximizing the
resonant part ``|a^(r)(y)|`` is the most influential site ``ybar``; moving its
potential moves the resonant eigenvalues through a rank-one term.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .eigenflow import _snap_within_budget
from .lattice import Hamiltonian
from .multiscale import (Block, MultiscaleState, ScaleSchedule, advance_scale, local_eliminator,
                         localized_operator, start_cascade)
from .schur import (BlockPartition, NearSingularElimination, NoConvergence, SpectralWindow,
                    fixed_point_eigenvalues, schur_complement)


class CollarExhaustsLattice(ValueError):
    """The collar has no exterior neighbour inside the lattice."""


def _closest(values, target):
    """Entry of ``values`` closest to ``target``; ties go to the smaller value."""
    return min(values, key=lambda v: (abs(v - target), v))


def _spread(M: np.ndarray) -> float:
    if M.shape[0] == 0:
        return 0.0
    w = numerics.eigvalsh(M)
    return float(max(w) - min(w))


def _restricted(H: Hamiltonian, region, keep, lam) -> np.ndarray:
    """Schur complement of ``H[region]`` onto the ``keep`` sites at ``lam``."""
    region = list(region)
    pos = {s: i for i, s in enumerate(region)}
    partition = BlockPartition.from_keep(len(region), [pos[s] for s in keep])
    return schur_complement(H.submatrix(region), partition, lam).matrix


def _resolvent_block(H: Hamiltonian, region, rows, lam) -> np.ndarray:
    """``[(H[region] - lam)^{-1}]`` restricted to ``rows x rows``."""
    region = list(region)
    pos = {s: i for i, s in enumerate(region)}
    d = H.submatrix(region).copy()
    idx = np.arange(len(region))
    d[idx, idx] = d[idx, idx] - lam
    rhs = numerics.zeros((len(region), len(rows)), mp=H.is_mp)
    for j, y in enumerate(rows):
        rhs[pos[y], j] = 1
    X = numerics.solve(d, rhs)
    return X[[pos[y] for y in rows], :]


def reduced_basis_operator(F: np.ndarray, basis: np.ndarray, n_res: int, mu) -> np.ndarray:
    """Schur complement of ``basis^T F basis`` onto the first ``n_res`` columns at ``mu``.

    ``f = q - r (t - mu)^{-1} s`` with ``q, r, s, t`` the blocks of ``F`` in the
    given orthonormal basis, split resonant / nonresonant.
    """
    P = numerics.symmetrize(basis.T @ F @ basis)
    if n_res == P.shape[0]:
        return P
    q, r, t = P[:n_res, :n_res], P[:n_res, n_res:], P[n_res:, n_res:].copy()
    idx = np.arange(t.shape[0])
    t[idx, idx] = t[idx, idx] - mu
    return numerics.symmetrize(q - r @ numerics.solve(t, r.T))


# --------------------------------------------------------------------------
# influence

@dataclass
class InfluenceProfile:
    """Coupling of a block's collar eigenfunctions to the sites just outside.

    Attributes
    ----------
    block : Block
        The block with its collar.
    lam
        Evaluation energy (a fixed point of the localized operator).
    psi : ndarray
        ``G phi_1`` on the collar (collar order), ``phi_1`` the eigenvector of
        the localized operator whose eigenvalue is closest to ``lam``.
    influences : dict
        ``y -> |sum of psi over collar neighbours of y|`` for every exterior
        neighbour ``y`` of the collar.
    a_vectors : dict
        ``y -> (a_1(y), ..., a_nhat(y))`` over the resonant eigenvectors.
    ybar : int
        Site maximizing ``|a^(r)(y)|``; ties go to the smallest index.
    eigenvalues : ndarray
        Eigenvalues of the localized operator at ``lam``, resonant first.
    basis : ndarray
        Matching orthonormal eigenvectors (columns), block order.
    n_hat : int
        Number of resonant eigenvalues.
    """

    block: Block
    lam: object
    psi: np.ndarray
    influences: dict
    a_vectors: dict
    ybar: int
    eigenvalues: np.ndarray
    basis: np.ndarray
    n_hat: int
    neighbours: dict = field(default_factory=dict)

    def a_norm(self, y: int) -> float:
        a = self.a_vectors[y]
        return float(numerics.sqrt(sum(v * v for v in a))) if len(a) else 0.0

    @property
    def max_influence(self) -> float:
        return max(float(v) for v in self.influences.values())

    def to_dict(self) -> dict:
        return {
            "block": list(self.block.sites),
            "collar": [self.block.collar[0], self.block.collar[-1]] if self.block.collar else [],
            "lambda": numerics.decimal_string(self.lam, 40),
            "ybar": self.ybar,
            "n_hat": self.n_hat,
            "influences": {str(y): float(v) for y, v in self.influences.items()},
            "a_norms": {str(y): self.a_norm(y) for y in self.a_vectors},
        }


def influence_profile(H: Hamiltonian, block: Block, lam,
                      resonant: SpectralWindow | None = None) -> InfluenceProfile:
    """Influences and coupling vectors of the collar's exterior neighbours.

    Parameters
    ----------
    H, block
        Hamiltonian and an isolated block whose collar is not the lattice.
    lam
        Energy at which the localized operator is diagonalized.
    resonant
        Eigenvalues inside this window form the resonant set. By default only
        the eigenvalue closest to ``lam`` is resonant.

    Raises
    ------
    CollarExhaustsLattice
        If no lattice site lies next to the collar.
    """
    geom = H.geometry
    exterior = geom.exterior_boundary(block.collar)
    if not exterior:
        raise CollarExhaustsLattice("collar has no exterior neighbour")
    with numerics.working_precision(H.precision):
        elim, collar = local_eliminator(H, block)
        F = elim.at(lam).matrix
        w, V = numerics.eigh(F)
        order = sorted(range(len(w)), key=lambda i: (abs(w[i] - lam), i))
        if resonant is None:
            res = [order[0]]
        else:
            res = [i for i in order if resonant.lo <= w[i] <= resonant.hi]
        rest = [i for i in range(len(w)) if i not in res]
        cols = res + rest
        w = np.asarray([w[i] for i in cols], dtype=w.dtype)
        V = V[:, cols]
        Psi = np.column_stack([elim.lift(lam, V[:, j]) for j in range(len(cols))])
        pos = {s: i for i, s in enumerate(block.collar)}
        inside = set(block.collar)
        influences, a_vectors, neighbours = {}, {}, {}
        for y in exterior:
            nb = [x for x in inside if geom.distance(x, y) == 1]
            rows = [pos[x] for x in sorted(nb)]
            sums = Psi[rows, :].sum(axis=0)
            neighbours[y] = tuple(sorted(nb))
            influences[y] = abs(sums[0])
            a_vectors[y] = sums[:len(res)]
        prof = InfluenceProfile(block, lam, Psi[:, 0], influences, a_vectors, exterior[0],
                                w, V, len(res), neighbours)
        prof.ybar = min(exterior, key=lambda y: (-prof.a_norm(y), y))
        return prof


# --------------------------------------------------------------------------
# trial setup

@dataclass
class MovementSetup:
    """Everything the decomposition and sweep need for one realization.

    ``block_prev`` is the block at scale ``k - 1`` (collar ``C1``) and ``block``
    the same site set at scale ``k`` (collar ``C2``).
    """

    hamiltonian: Hamiltonian
    state: MultiscaleState
    k: int
    block_prev: Block
    block: Block
    E_k: object
    E_next: object
    eps_k: object
    eps_next: object
    lam0: object
    lam: object
    n_hat_prev: int
    profile: InfluenceProfile

    def to_dict(self) -> dict:
        s = lambda v: numerics.decimal_string(v, 40)
        return {
            "k": self.k, "block": list(self.block.sites),
            "collar_prev": len(self.block_prev.collar), "collar": len(self.block.collar),
            "E_k": s(self.E_k), "E_next": s(self.E_next), "lambda0": s(self.lam0),
            "lambda": s(self.lam), "n_hat_prev": self.n_hat_prev, "ybar": self.profile.ybar,
        }


def closest_energy_path(H: Hamiltonian, schedule: ScaleSchedule, x: int, k: int):
    """Cascade from ``E_1 = H_xx`` up to scale ``k`` along the closest solutions.

    At each scale the fixed point of the localized operator of ``x``'s block
    closest to ``E_j`` in ``[E_j +- eps_j / 3]`` is snapped to the next grid.

    Returns
    -------
    (state, reason)
        ``reason`` is ``None`` on success, otherwise the state where the path
        stopped and a short explanation.
    """
    with numerics.working_precision(H.precision):
        mp = H.is_mp
        state = start_cascade(H, schedule, H.diagonal_energy(x))
        while state.k < k:
            j = state.k
            block = state.block_containing(x)
            if block is None:
                return state, "left-resonant-set"
            if block.terminal:
                return state, "collar-exhausts-lattice"
            Ej = state.current.energy
            budget = schedule.window(j, mp=mp) / 3
            elim, _ = local_eliminator(H, block)
            try:
                fps = fixed_point_eigenvalues(elim.K, elim.partition, SpectralWindow(Ej, budget))
            except (NearSingularElimination, NoConvergence):
                return state, "near-singular"
            if not fps:
                return state, "no-solution"
            sol = _closest([fp.value for fp in fps], Ej)
            E_next, _ = _snap_within_budget(sol, schedule.window(j + 1, mp=mp), Ej, budget)
            state = advance_scale(state, E_next)
        return state, None


def prepare_influence_trial(H: Hamiltonian, schedule: ScaleSchedule, x: int, k: int = 2):
    """Isolated block resonant at step ``k`` and a fixed point near ``E_k``.

    Returns ``(state, block_prev, lam, reason)``; ``reason`` is ``None`` when the
    conditions hold: the scale ``k - 1`` block of ``x`` is isolated, survives
    the resonance test at ``E_k``, its collar is smaller than the lattice, and
    its localized operator has a fixed point in ``[E_k +- eps_k / 2]``
    (the one closest to ``E_k`` is returned).
    """
    with numerics.working_precision(H.precision):
        state, reason = closest_energy_path(H, schedule, x, k)
        if reason is not None:
            return state, None, None, reason
        prev = state.block_containing(x, k - 1)
        if prev is None or not prev.isolated:
            return state, prev, None, "not-isolated"
        if prev.fate != "survives":
            return state, prev, None, f"fate-{prev.fate}"
        if prev.terminal or H.geometry.set_diameter(prev.collar) >= H.geometry.diam:
            return state, prev, None, "collar-exhausts-lattice"
        Ek = state.current.energy
        eps_k = schedule.window(k, mp=H.is_mp)
        elim, _ = local_eliminator(H, prev)
        try:
            fps = fixed_point_eigenvalues(elim.K, elim.partition, SpectralWindow(Ek, eps_k / 2))
        except (NearSingularElimination, NoConvergence):
            return state, prev, None, "near-singular"
        if not fps:
            return state, prev, None, "no-fixed-point"
        return state, prev, _closest([fp.value for fp in fps], Ek), None


def prepare_movement_trial(H: Hamiltonian, schedule: ScaleSchedule, x: int, k: int = 2):
    """Set up the movement experiment at scale ``k`` for start site ``x``.

    Returns ``(setup, reason)`` with exactly one of them ``None``. Invalid
    reasons: the path did not reach scale ``k``; the scale ``k - 1`` block is
    not isolated, not resonant, or near-singular; the block changed between
    scales; the collars are not nested; another resonant site sits inside the
    smaller collar; the smaller collar spans the lattice or its neighbours
    leave the larger collar; no next energy; no eigenvalue near the next
    energy; no fixed point near ``lambda_0``.
    """
    with numerics.working_precision(H.precision):
        mp = H.is_mp
        geom = H.geometry
        state, reason = closest_energy_path(H, schedule, x, k)
        if reason is not None:
            return None, reason
        prev = state.block_containing(x, k - 1)
        cur = state.block_containing(x, k)
        if prev is None or not prev.isolated:
            return None, "not-isolated"
        if prev.fate != "survives" or prev.n_hat is None:
            return None, f"fate-{prev.fate}"
        if cur is None or cur.sites != prev.sites:
            return None, "block-changed"
        if prev.terminal or geom.set_diameter(prev.collar) >= geom.diam:
            return None, "collar-exhausts-lattice"
        if not set(prev.collar) <= set(cur.collar):
            return None, "collars-not-nested"
        resonant_prev = set(state.levels[k - 2].resonant)
        if resonant_prev.intersection(prev.collar) != set(prev.sites):
            return None, "foreign-resonant-in-collar"
        exterior = geom.exterior_boundary(prev.collar)
        if not exterior or not set(exterior) <= set(cur.collar):
            return None, "neighbours-outside-collar"
        Ek = state.current.energy
        eps_k = schedule.window(k, mp=mp)
        eps_next = schedule.window(k + 1, mp=mp)
        try:
            elim2, _ = local_eliminator(H, cur)
            fps = fixed_point_eigenvalues(elim2.K, elim2.partition, SpectralWindow(Ek, eps_k / 3))
            if not fps:
                return None, "no-next-energy"
            sol = _closest([fp.value for fp in fps], Ek)
            E_next, _ = _snap_within_budget(sol, eps_next, Ek, eps_k / 3)
            elim1, _ = local_eliminator(H, prev)
            w = numerics.eigvalsh(elim1.at(E_next).matrix)
            lam0 = _closest(list(w), E_next)
            if abs(lam0 - E_next) > eps_k / 9:
                return None, "no-eigenvalue-near-next-energy"
            fps1 = fixed_point_eigenvalues(elim1.K, elim1.partition, SpectralWindow(Ek, eps_k / 2))
        except (NearSingularElimination, NoConvergence):
            return None, "near-singular"
        if not fps1:
            return None, "no-fixed-point"
        lam = _closest([fp.value for fp in fps1], lam0)
        profile = influence_profile(H, prev, lam, SpectralWindow(E_next, eps_k / 2))
        setup = MovementSetup(H, state, k, prev, cur, Ek, E_next, eps_k, eps_next, lam0, lam,
                              int(prev.n_hat), profile)
        return setup, None


# --------------------------------------------------------------------------
# decomposition

@dataclass
class MovementDecomposition:
    """``f1(lam) - f2(E_next) = rank_one + constant + remainder`` on the resonant space.

    ``f1`` and ``f2`` are the reduced resonant operators built from the smaller
    and larger collar in the eigenbasis of the smaller collar's operator at
    ``lam``. ``constant`` does not depend on ``v_ybar``.
    """

    ybar: int
    n_hat: int
    rank_one: np.ndarray
    constant_part: np.ndarray
    remainder: np.ndarray
    direct: np.ndarray
    pieces: dict
    coefficient: object
    a_ybar: np.ndarray
    reconstruction_error: float
    kernel_error: float
    norms: dict
    bounds: dict
    spreads: dict

    @property
    def a_norm(self) -> float:
        return float(numerics.sqrt(sum(v * v for v in self.a_ybar))) if len(self.a_ybar) else 0.0

    def to_dict(self) -> dict:
        return {
            "ybar": self.ybar, "n_hat": self.n_hat,
            "coefficient": float(self.coefficient), "a_ybar_norm": self.a_norm,
            "reconstruction_error": self.reconstruction_error,
            "kernel_error": self.kernel_error,
            "norms": dict(self.norms), "bounds": dict(self.bounds), "spreads": dict(self.spreads),
        }


def _rel_error(A, B) -> float:
    scale = numerics.norm2(B)
    diff = numerics.norm2(A - B)
    if scale == 0.0:
        return diff
    return diff / scale


def movement_decomposition(setup: MovementSetup) -> MovementDecomposition:
    """Split the resonant eigenvalue movement into rank-one, constant and remainder parts.

    Both localized operators are computed directly, and the collar-growth
    term is also rebuilt from the exterior kernel
    ``K = gamma^2 [(H[C2 \\ B] - lam)^{-1}]`` on the neighbours ``Y`` of ``C1``,
    split as ``K = K0 + K1 + K2``: ``K0`` with ``ybar`` removed from the
    region, ``K1 = gamma^2 / (H_ybar - lam)`` at ``(ybar, ybar)``.

    Pieces (all ``n_hat x n_hat``): ``C1 = a K0 a``, ``R1 = a K2 a``,
    ``R2`` the nonresonant feedback of the larger collar at ``lam``,
    ``C2 = f1(lam) - f1(E)``, ``R3 = f2(lam) - f2(E) - C2``; the constant part
    is ``C1 + C2`` and the remainder ``R1 + R2 + R3``.
    """
    H = setup.hamiltonian
    prof = setup.profile
    B, C1, C2 = setup.block.sites, setup.block_prev.collar, setup.block.collar
    lam, E = setup.lam, setup.E_next
    gamma = H.gamma
    with numerics.working_precision(H.precision):
        mp = H.is_mp
        g = numerics.to_mp(gamma) if mp else gamma
        n = prof.n_hat
        Phi = prof.basis
        F1_lam = localized_operator(H, setup.block_prev, lam).matrix
        F1_E = localized_operator(H, setup.block_prev, E).matrix
        F2_lam = localized_operator(H, setup.block, lam).matrix
        F2_E = localized_operator(H, setup.block, E).matrix
        f1_lam = reduced_basis_operator(F1_lam, Phi, n, lam)
        f1_E = reduced_basis_operator(F1_E, Phi, n, E)
        f2_lam = reduced_basis_operator(F2_lam, Phi, n, lam)
        f2_E = reduced_basis_operator(F2_E, Phi, n, E)
        direct = f1_lam - f2_E

        Y = sorted(prof.a_vectors)
        ybar = prof.ybar
        exterior_region = [s for s in C2 if s not in set(B)]
        K = g * g * _resolvent_block(H, exterior_region, Y, lam)
        Y0 = [y for y in Y if y != ybar]
        K0 = numerics.zeros(K.shape, mp=mp)
        if Y0:
            region0 = [s for s in exterior_region if s != ybar]
            sub = g * g * _resolvent_block(H, region0, Y0, lam)
            idx = [Y.index(y) for y in Y0]
            K0[np.ix_(idx, idx)] = sub
        coef = g * g / (H.matrix[ybar, ybar] - lam)
        K1 = numerics.zeros(K.shape, mp=mp)
        K1[Y.index(ybar), Y.index(ybar)] = coef
        K2 = K - K0 - K1
        A = np.vstack([prof.a_vectors[y] for y in Y])
        a_bar = A[Y.index(ybar)]
        rank_one = coef * np.outer(a_bar, a_bar)
        C1_part = numerics.symmetrize(A.T @ K0 @ A)
        R1 = numerics.symmetrize(A.T @ K2 @ A)

        # collar growth on the full block, kernel route vs direct
        Psi_full = np.vstack([prof.a_vectors[y] for y in Y])  # resonant part
        P2 = numerics.symmetrize(Phi.T @ F2_lam @ Phi)
        if n < P2.shape[0]:
            rt = P2[:n, n:]
            tt = P2[n:, n:].copy()
            idx = np.arange(tt.shape[0])
            tt[idx, idx] = tt[idx, idx] - lam
            R2 = numerics.symmetrize(rt @ numerics.solve(tt, rt.T))
        else:
            R2 = numerics.zeros((n, n), mp=mp)
        delta_rr = numerics.symmetrize(Phi[:, :n].T @ (F1_lam - F2_lam) @ Phi[:, :n])
        kernel_error = _rel_error(Psi_full.T @ K @ Psi_full, delta_rr)
        C2_part = f1_lam - f1_E
        R3 = (f2_lam - f2_E) - C2_part
        constant = C1_part + C2_part
        remainder = R1 + R2 + R3
        recon = rank_one + constant + remainder
        err = _rel_error(recon, direct)

        a2 = sum(v * v for v in a_bar)
        eps_k = setup.eps_k
        norms = {
            "rank_one": numerics.norm2(rank_one), "constant": numerics.norm2(constant),
            "remainder": numerics.norm2(remainder), "C1": numerics.norm2(C1_part),
            "C2": numerics.norm2(C2_part), "R1": numerics.norm2(R1), "R2": numerics.norm2(R2),
            "R3": numerics.norm2(R3), "direct": numerics.norm2(direct),
        }
        bounds = {
            "constant": float(g * eps_k),
            "remainder": float(g ** numerics.like(2.5, g) * a2),
        }
        M1 = -rank_one
        M2 = f1_lam - constant
        spreads = {
            "rank_one": _spread(rank_one),
            "rank_one_predicted": float(abs(coef) * a2) if n >= 2 else 0.0,
            "M1": _spread(M1), "M2": _spread(M2), "sum": _spread(M1 + M2),
        }
        pieces = {"C1": C1_part, "C2": C2_part, "R1": R1, "R2": R2, "R3": R3,
                  "f1_lam": f1_lam, "f2_E": f2_E, "K": K, "K0": K0, "K1": K1, "K2": K2}
        return MovementDecomposition(ybar, n, rank_one, constant, remainder, direct, pieces,
                                     coef, a_bar, err, kernel_error, norms, bounds, spreads)


# --------------------------------------------------------------------------
# sweep over the potential at ybar

@dataclass
class SweepResult:
    """Resonance counts of the larger collar for every potential level at ``ybar``."""

    ybar: int
    levels: list[int]
    n_hat_prev: int
    n_hat: list[int]
    n_hat_f: list[int]
    failures: dict
    actual_level: int

    @property
    def unchanged(self) -> int:
        return sum(1 for v in self.n_hat if v == self.n_hat_prev)

    @property
    def monotone(self) -> bool:
        return all(v <= self.n_hat_prev for v in self.n_hat)

    def to_dict(self) -> dict:
        return {
            "ybar": self.ybar, "n_hat_prev": self.n_hat_prev, "actual_level": self.actual_level,
            "n_hat": list(self.n_hat), "n_hat_f": list(self.n_hat_f),
            "unchanged": self.unchanged, "monotone": self.monotone,
            "failures": {str(k): v for k, v in self.failures.items()},
        }


def sweep_vbar(setup: MovementSetup) -> SweepResult:
    """Recount resonant eigenvalues at ``E_next`` for each of the ``N`` levels of ``v_ybar``.

    All other potentials and both collars stay fixed. The larger collar is
    first reduced onto ``B + {ybar}`` at ``E_next`` (independent of
    ``v_ybar``); each level then costs one scalar elimination.
    """
    H = setup.hamiltonian
    prof = setup.profile
    ybar = prof.ybar
    B = list(setup.block.sites)
    E = setup.E_next
    N = H.disorder.N
    with numerics.working_precision(H.precision):
        mp = H.is_mp
        eps_next = setup.eps_next
        M = _restricted(H, setup.block.collar, B + [ybar], E)
        n = len(B)
        M_bb, M_by, m_yy = M[:n, :n], M[:n, n], M[n, n]
        base = H.matrix[ybar, ybar]
        counts, counts_f, failures = [], [], {}
        for level in range(N):
            new = (numerics.to_mp(2 * H.geometry.d) * numerics.to_mp(H.gamma)
                   + numerics.to_mp(level) / (N - 1)) if mp else (2 * H.geometry.d * H.gamma + level / (N - 1))
            denom = m_yy + (new - base) - E
            if denom == 0:
                failures[level] = "singular"
                counts.append(-1)
                counts_f.append(-1)
                continue
            F = numerics.symmetrize(M_bb - np.outer(M_by, M_by) / denom)
            w = numerics.eigvalsh(F)
            counts.append(sum(1 for v in w if abs(v - E) <= eps_next))
            f = reduced_basis_operator(F, prof.basis, prof.n_hat, E)
            wf = numerics.eigvalsh(f) if prof.n_hat else []
            counts_f.append(sum(1 for v in wf if abs(v - E) <= 2 * eps_next))
        return SweepResult(ybar, list(range(N)), setup.n_hat_prev, counts, counts_f, failures,
                           int(H.disorder.levels[ybar]))


def level_gaps(H: Hamiltonian, lam) -> float:
    """Smallest gap between the values ``1 / (v + 2 d gamma - lam)`` over the ``N`` levels."""
    N = H.disorder.N
    dens = [2 * H.geometry.d * H.gamma + j / (N - 1) - float(lam) for j in range(N)]
    # a level at lam itself sits at infinity, infinitely far from the rest
    vals = sorted(1.0 / x for x in dens if x != 0)
    return min((b - a for a, b in zip(vals, vals[1:])), default=float("inf"))
