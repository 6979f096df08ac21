"""Schur complements, spectral windows and the fixed-point eigenvalue solver.

For a symmetric matrix split into kept indices (block ``A``) and eliminated
indices (block ``D``) with coupling ``B = C^T``, the effective operator at
energy ``lam`` is ``F(lam) = A - B (D - lam)^{-1} C``. A number ``lam`` is an
eigenvalue of the full matrix exactly when it is an eigenvalue of
``F(lam)`` (provided ``D - lam`` is invertible), and the eigenvector lifts to
``(phi, -(D - lam)^{-1} C phi)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import numerics
from .numerics import is_mp, to_float


class NearSingularElimination(ArithmeticError):
    """``D - lam`` is too close to singular to be eliminated safely."""

    def __init__(self, margin: float, floor: float):
        super().__init__(f"elimination margin {margin:.3e} below floor {floor:.3e}")
        self.margin = margin
        self.floor = floor


class NoConvergence(ArithmeticError):
    def __init__(self, iterations: int, step: float):
        super().__init__(f"fixed-point iteration did not converge in {iterations} steps "
                         f"(last step {step:.3e})")
        self.iterations = iterations
        self.step = step


@dataclass(frozen=True)
class BlockPartition:
    """Index split of a parent set into kept and eliminated positions."""

    keep: tuple[int, ...]
    eliminate: tuple[int, ...]

    def __post_init__(self):
        if set(self.keep) & set(self.eliminate):
            raise ValueError("keep and eliminate overlap")

    @classmethod
    def from_keep(cls, size: int, keep: Sequence[int]) -> "BlockPartition":
        keep = tuple(int(i) for i in keep)
        if any(i < 0 or i >= size for i in keep):
            raise ValueError("kept index out of range")
        kept = set(keep)
        return cls(keep, tuple(i for i in range(size) if i not in kept))

    @property
    def size(self) -> int:
        return len(self.keep) + len(self.eliminate)


@dataclass(frozen=True)
class SpectralWindow:
    """The closed interval ``[center - half_width, center + half_width]``."""

    center: object
    half_width: object

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be non-negative")

    @property
    def lo(self):
        return self.center - self.half_width

    @property
    def hi(self):
        return self.center + self.half_width

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def scaled(self, factor: float) -> "SpectralWindow":
        return SpectralWindow(self.center, self.half_width * factor)


@dataclass(frozen=True, eq=False)
class SchurComplement:
    """Effective operator on the kept indices at one energy.

    Attributes
    ----------
    matrix : ndarray
        ``F(lam)``, symmetric.
    lam
        Evaluation energy.
    partition : BlockPartition
    elimination_margin : float
        ``min |eig(D) - lam|``.
    off_diag_norm : float
        ``||B||``.
    resolvent_coupling : ndarray
        ``(D - lam)^{-1} C``; minus this maps kept amplitudes to eliminated ones.
    """

    matrix: np.ndarray
    lam: object
    partition: BlockPartition
    elimination_margin: float
    off_diag_norm: float
    resolvent_coupling: np.ndarray

    def lipschitz_constant(self) -> float:
        """Bound ``2 (||B|| / margin)^2`` on the slope of ``F`` in ``lam``."""
        return 2.0 * (self.off_diag_norm / self.elimination_margin) ** 2


def elimination_floor(K: np.ndarray) -> float:
    """Smallest acceptable ``min |eig(D - lam)|`` for eliminating from ``K``.

    ``1e-12 * ||K||`` in double precision. In mpfr the relative floor tracks
    the working precision instead, since the whole point of extended precision
    is to resolve windows far below 1e-12.
    """
    Kf = to_float(K)
    scale = float(np.abs(Kf).sum(axis=1).max()) if Kf.size else 0.0
    rel = 1e4 * numerics.unit_roundoff(K) if is_mp(K) else 1e-12
    return max(scale, 1e-300) * rel


class Eliminator:
    """Reusable split of ``K`` for evaluating ``F(lam)`` at many energies."""

    def __init__(self, K: np.ndarray, partition: BlockPartition, floor: float | None = None):
        K = np.asarray(K)
        numerics.check_symmetric(K)
        if partition.size != K.shape[0]:
            raise ValueError("partition does not match matrix size")
        self.K = K
        self.partition = partition
        self.mp = is_mp(K)
        keep = np.asarray(partition.keep, dtype=np.int64)
        elim = np.asarray(partition.eliminate, dtype=np.int64)
        self.A = K[np.ix_(keep, keep)]
        self.B = K[np.ix_(keep, elim)]
        self.C = K[np.ix_(elim, keep)]
        self.D = K[np.ix_(elim, elim)]
        self.floor = elimination_floor(K) if floor is None else float(floor)
        Df = to_float(self.D)
        if elim.size:
            self.poles, self._pole_vectors = numerics.eigh(Df)
        else:
            self.poles, self._pole_vectors = np.zeros(0), np.zeros((0, 0))
        self.off_diag_norm = numerics.norm2(to_float(self.B)) if self.B.size else 0.0

    def margin(self, lam) -> float:
        if self.poles.size == 0:
            return float("inf")
        gaps = np.abs(self.poles - float(lam))
        m = float(gaps.min())
        if self.mp and m < 1e-8:
            m = self._refined_margin(lam, int(gaps.argmin()))
        return m

    def _refined_margin(self, lam, nearest: int) -> float:
        # inverse iteration on D - lam from the double-precision eigenvector
        shifted = self._shifted(lam)
        u = numerics.mp_array(self._pole_vectors[:, nearest])
        est = float("inf")
        for _ in range(3):
            try:
                w = numerics.solve(shifted, u)
            except np.linalg.LinAlgError:
                return 0.0
            nw = numerics.sqrt(w @ w)
            est = float(numerics.sqrt(u @ u) / nw)
            u = w / nw
        return est

    def refined_pole(self, index: int):
        """Eigenvalue ``index`` of ``D`` at the working precision.

        Rayleigh-quotient iteration started from the double-precision pair.
        """
        if not self.mp:
            return self.poles[index]
        u = numerics.mp_array(self._pole_vectors[:, index])
        u = u / numerics.sqrt(u @ u)
        rho = u @ (self.D @ u)
        for _ in range(6):
            try:
                w = numerics.solve(self._shifted(rho), u)
            except np.linalg.LinAlgError:
                break
            u = w / numerics.sqrt(w @ w)
            new = u @ (self.D @ u)
            if new == rho:
                break
            rho = new
        return rho

    def _shifted(self, lam) -> np.ndarray:
        Dl = self.D.copy()
        idx = np.arange(Dl.shape[0])
        Dl[idx, idx] = Dl[idx, idx] - lam
        return Dl

    def at(self, lam) -> SchurComplement:
        margin = self.margin(lam)
        if margin < self.floor:
            raise NearSingularElimination(margin, self.floor)
        if self.D.shape[0] == 0:
            X = self.C.copy()
            F = self.A.copy()
        else:
            X = numerics.solve(self._shifted(lam), self.C)
            F = numerics.symmetrize(self.A - self.B @ X)
        return SchurComplement(F, lam, self.partition, margin, self.off_diag_norm, X)

    def lift(self, lam, phi_keep: np.ndarray) -> np.ndarray:
        """Full-space vector ``(phi, -(D - lam)^{-1} C phi)`` in parent ordering."""
        margin = self.margin(lam)
        if margin < self.floor:
            raise NearSingularElimination(margin, self.floor)
        psi = numerics.zeros(self.partition.size, mp=self.mp or is_mp(phi_keep))
        psi[list(self.partition.keep)] = phi_keep
        if self.D.shape[0]:
            tail = numerics.solve(self._shifted(lam), self.C @ phi_keep)
            psi[list(self.partition.eliminate)] = -tail
        return psi


def schur_complement(K: np.ndarray, partition: BlockPartition, lam,
                     floor: float | None = None) -> SchurComplement:
    """``F(lam) = A - B (D - lam)^{-1} C``.

    Raises
    ------
    NearSingularElimination
        If ``min |eig(D) - lam|`` is below the elimination floor.

    Examples
    --------
    >>> K = np.array([[0.0, 1.0], [1.0, 2.0]])
    >>> float(schur_complement(K, BlockPartition((0,), (1,)), 0.0).matrix[0, 0])
    -0.5
    """
    return Eliminator(K, partition, floor).at(lam)


def dense_spectrum(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix."""
    numerics.check_symmetric(M)
    return numerics.eigh(M)


def spectral_distance(M: np.ndarray, E):
    """``min_i |lambda_i(M) - E|``."""
    w = numerics.eigvalsh(M)
    return min(abs(x - E) for x in w)


def count_in_window(M: np.ndarray, window: SpectralWindow) -> int:
    """Number of eigenvalues (with multiplicity) in the closed window."""
    w = numerics.eigvalsh(M)
    return int(sum(1 for x in w if window.lo <= x <= window.hi))


class FixedPoint(NamedTuple):
    value: object
    vector: np.ndarray
    branch: int
    iterations: int


def _split_at_poles(lo, hi, elim: Eliminator, gap: float):
    slack = 1e-12 * max(1.0, float(np.abs(elim.poles).max())) if elim.poles.size else 0.0
    cuts = []
    for i, p in enumerate(elim.poles):
        if float(lo) - slack < p < float(hi) + slack:
            q = elim.refined_pole(i)
            if lo < q < hi:
                cuts.append(q)
    cuts.sort()
    edges = [lo]
    for p in cuts:
        edges.extend([p - gap, p + gap])
    edges.append(hi)
    return [(edges[i], edges[i + 1]) for i in range(0, len(edges), 2) if edges[i] <= edges[i + 1]]


def fixed_point_eigenvalues(K: np.ndarray, partition: BlockPartition, window: SpectralWindow,
                            tol: float | None = None, max_iter: int = 200,
                            floor: float | None = None) -> list[FixedPoint]:
    """All solutions of ``lam in spec F(lam)`` inside ``window``.

    On an interval free of eigenvalues of ``D`` the ordered eigenvalues
    ``mu_i(lam)`` of ``F(lam)`` are non-increasing, so each
    ``g_i(lam) = mu_i(lam) - lam`` has at most one root and the roots are found
    branch by branch. Each root is located by the iteration
    ``lam <- mu_i(F(lam))``, accelerated by secant steps and safeguarded by
    the sign bracket of ``g_i``; a root of multiplicity ``m`` appears on ``m``
    branches, so multiplicities come out without clustering heuristics.

    Parameters
    ----------
    K : ndarray
        Symmetric matrix, float64 or mpfr object array.
    partition : BlockPartition
    window : SpectralWindow
        Closed search interval.
    tol : float, optional
        Convergence tolerance on successive iterates; defaults to 1e-12 for
        float input and a precision-dependent value for mpfr input.
    max_iter : int
    floor : float, optional
        Elimination floor, see :func:`elimination_floor`.

    Returns
    -------
    list of FixedPoint
        Sorted by value; ``vector`` is a unit eigenvector of ``F(value)``.
    """
    elim = Eliminator(K, partition, floor)
    mp = elim.mp
    lo = numerics.like(window.lo, K)
    hi = numerics.like(window.hi, K)
    if tol is None:
        tol = numerics.default_tolerance(K) * max(1.0, abs(float(window.center)))
    out: list[FixedPoint] = []
    for a, b in _split_at_poles(lo, hi, elim, 4 * elim.floor):
        Fa = elim.at(a)
        Fb = Fa if b == a else elim.at(b)
        mu_a = numerics.eigvalsh(Fa.matrix)
        mu_b = numerics.eigvalsh(Fb.matrix)
        for i in range(len(mu_a)):
            ga, gb = mu_a[i] - a, mu_b[i] - b
            if ga < -tol or gb > tol:
                continue
            out.append(_solve_branch(elim, i, a, b, ga, gb, tol, max_iter, mp))
    out.sort(key=lambda fp: (fp.value, fp.branch))
    return out


def _solve_branch(elim: Eliminator, i: int, a, b, ga, gb, tol, max_iter: int, mp: bool) -> FixedPoint:
    def evaluate(lam):
        w, V = numerics.eigh(elim.at(lam).matrix)
        return w[i], V[:, i]

    if ga <= 0:
        return FixedPoint(a, evaluate(a)[1], i, 0)
    if gb >= 0:
        return FixedPoint(b, evaluate(b)[1], i, 0)
    lo, hi = a, b
    x = (a + b) / 2
    mu, vec = evaluate(x)
    gx = mu - x
    prev = None
    step = abs(hi - lo)
    for it in range(1, max_iter + 1):
        if gx > 0:
            lo = x
        elif gx < 0:
            hi = x
        else:
            return FixedPoint(x, vec, i, it)
        candidate = mu
        if prev is not None and prev[1] != gx:
            candidate = x - gx * (x - prev[0]) / (gx - prev[1])
        if not (lo < candidate < hi):
            candidate = (lo + hi) / 2
        step = abs(candidate - x)
        prev = (x, gx)
        x = candidate
        mu, vec = evaluate(x)
        gx = mu - x
        if step <= tol or hi - lo <= tol:
            # where the map contracts, the image mu_i(F(x)) is closer to the
            # root than x (and exact when F does not depend on lam); near a
            # pole it expands and x is the better estimate
            slope = 1 + (gx - prev[1]) / (x - prev[0]) if x != prev[0] else 0
            return FixedPoint(mu if abs(slope) < 1 else x, vec, i, it)
    raise NoConvergence(max_iter, float(step))


def lift_eigenvector(K: np.ndarray, partition: BlockPartition, lam, phi_keep: np.ndarray,
                     floor: float | None = None) -> np.ndarray:
    """Extend an eigenvector of ``F(lam)`` to an eigenvector of ``K``."""
    return Eliminator(K, partition, floor).lift(lam, np.asarray(phi_keep))


def relative_residual(K: np.ndarray, lam, psi: np.ndarray) -> float:
    r = K @ psi - lam * psi
    return numerics.norm2(r) / numerics.norm2(psi)
