"""Resonant-block cascade.

Starting from the sites whose bare energy ``2 d gamma + v_x`` lies within
``eps_1`` of a probe energy, the cascade groups resonant sites into blocks at
length scale ``L_k = L0 * 2^k``, surrounds every block by a collar, and removes
blocks that are small ("isolated") and whose localized operator has no
eigenvalue within ``eps_{k+1}`` of the next energy. The localized operator of a
block is the Schur complement of ``H`` restricted to the collar onto the block.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _cc

from . import numerics
from .lattice import Hamiltonian, LatticeGeometry
from .schur import (BlockPartition, Eliminator, NearSingularElimination, SchurComplement,
                    SpectralWindow, schur_complement)

FLOAT_UNDERFLOW = 1e-300
DIAMETER_FACTOR = 5.1


# --------------------------------------------------------------------------
# scale ladders

@dataclass(frozen=True)
class ScaleSchedule:
    """Length, window and decay ladders of the cascade.

    ``kind`` is ``"power"`` (``eps_k = gamma^(1.6 L_k)`` for ``k > 1``) or
    ``"geometric"`` (``eps_{k+1} = ratio * eps_k``). ``eps_1`` defaults to
    ``1 / (3 (N - 1))`` in both cases. ``kmax`` is the last scale whose window
    is representable in the chosen arithmetic.
    """

    L0: int
    gamma: float
    N: int
    kind: str = "geometric"
    alpha: float = 1.5
    p: float = 0.0
    ratio: float | None = 0.125
    eps1: float = 0.0
    kmax: int = 16
    precision: int | None = None
    notes: tuple[str, ...] = ()

    def length(self, k: int) -> int:
        return self.L0 * 2 ** k

    def link_range(self, k: int) -> float:
        return float(self.length(k)) ** self.alpha

    def collar_radius(self, k: int) -> int:
        return 2 * self.length(k)

    def double_collar_radius(self, k: int) -> float:
        return float(self.length(k)) ** math.sqrt(self.alpha)

    def window(self, k: int, mp: bool = False):
        """``eps_k``; an mpfr value when ``mp`` is set."""
        if k < 1:
            raise ValueError("scales start at k = 1")
        if mp:
            eps1 = numerics.to_mp(self.eps1)
            if k == 1:
                return eps1
            if self.kind == "power":
                return numerics.to_mp(self.gamma) ** (numerics.to_mp(16) * self.length(k) / 10)
            return eps1 * numerics.to_mp(self.ratio) ** (k - 1)
        if k == 1:
            return self.eps1
        if self.kind == "power":
            return self.gamma ** (1.6 * self.length(k))
        return self.eps1 * self.ratio ** (k - 1)

    def decay(self, k: int) -> float:
        """``r_1 = 0.9``, ``r_k = r_{k-1} (1 - 6 L_{k-1}^(1 - alpha))``."""
        r = 0.9
        for j in range(2, k + 1):
            r *= 1 - 6 * float(self.length(j - 1)) ** (1 - self.alpha)
        return r

    def k_bar(self, diam: int) -> int:
        """Termination scale: smallest ``k >= 2`` with ``5.1 L_{k-1} >= diam``."""
        k = 2
        while DIAMETER_FACTOR * self.length(k - 1) < diam:
            k += 1
        return k

    def regime_report(self, d: int = 1, diam: int | None = None) -> dict:
        eps = 1.0 / (self.N - 1)
        top = self.kmax if diam is None else min(self.kmax, self.k_bar(diam))
        mp = self.precision is not None
        windows = [self.window(k, mp=mp) for k in range(1, top + 1)]
        budget_ok = all(windows[i + 1] < windows[i] / 3 for i in range(len(windows) - 1))
        tail_ok = all(sum(windows[i:]) / 3 < windows[i] / 2 for i in range(len(windows)))
        decays = [self.decay(k) for k in range(1, top + 1)]
        return {
            "kind": self.kind,
            "gamma_below_eps20": self.gamma <= eps ** 20,
            "windows": [numerics.decimal_string(w, 12) if mp else float(w) for w in windows],
            "window_ratio_below_third": budget_ok,
            "shift_budget_summable": tail_ok,
            "decay_rates": decays,
            "decay_above_085": all(r >= 0.85 for r in decays),
            "kmax": self.kmax,
            "notes": list(self.notes),
        }

    def to_dict(self) -> dict:
        return {
            "L0": self.L0, "gamma": self.gamma, "N": self.N, "kind": self.kind,
            "alpha": self.alpha, "p": self.p, "ratio": self.ratio, "eps1": self.eps1,
            "kmax": self.kmax, "precision": self.precision,
        }


def make_schedule(L0: int, gamma: float, N: int, kind: str = "geometric", alpha: float = 1.5,
                  p: float = 0.0, ratio: float = 0.125, eps1: float | None = None,
                  diam: int | None = None, kmax: int | None = None,
                  precision: int | None = None) -> ScaleSchedule:
    """Build a :class:`ScaleSchedule`.

    Parameters
    ----------
    L0, gamma, N
        Base length, hopping and number of potential levels.
    kind : {"geometric", "power"}
    ratio : float
        Geometric window ratio, at most 1/4.
    eps1 : float, optional
        Override for the first window.
    diam : int, optional
        Lattice diameter; when given the ladders are checked up to ``k_bar``.
    kmax : int, optional
        Last scale to keep (default: ``k_bar`` if ``diam`` is known, else 16).
    precision : int, optional
        mpfr bits; disables float underflow truncation.
    """
    if int(L0) < 1:
        raise ValueError("L0 must be at least 1")
    if int(N) < 2:
        raise ValueError("N must be at least 2")
    if kind not in ("power", "geometric"):
        raise ValueError(f"unknown schedule kind {kind!r}")
    if kind == "power" and not gamma > 0:
        raise ValueError("the power-law schedule needs gamma > 0")
    if kind == "geometric" and not 0 < ratio <= 0.25:
        raise ValueError("geometric ratio must lie in (0, 1/4]")
    eps1 = 1.0 / (3 * (int(N) - 1)) if eps1 is None else float(eps1)
    sched = ScaleSchedule(int(L0), float(gamma), int(N), kind, float(alpha), float(p),
                          float(ratio) if kind == "geometric" else None, eps1, 16, precision)
    if kmax is None:
        kmax = sched.k_bar(diam) if diam is not None else 16
    notes = []
    if precision is None:
        k = 1
        while k < kmax and sched.window(k + 1) >= FLOAT_UNDERFLOW:
            k += 1
        if k < kmax:
            msg = f"window eps_{k + 1} underflows double precision; schedule truncated at k={k}"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
            kmax = k
    decays = [sched.decay(j) for j in range(1, kmax + 1)]
    if min(decays) < 0.85:
        notes.append(f"decay ladder drops to {min(decays):.3g} < 0.85 (L0 too small)")
    return replace(sched, kmax=int(kmax), notes=tuple(notes))


# --------------------------------------------------------------------------
# blocks and cascade state

@dataclass(frozen=True)
class Block:
    """One component of a resonant set together with its collars.

    ``fate`` is filled in when the cascade advances past ``scale``:
    ``"nonresonant"`` (removed), ``"survives"``, or ``"near-singular"``
    (the collar interior could not be eliminated; kept conservatively).
    """

    scale: int
    sites: tuple[int, ...]
    collar: tuple[int, ...]
    double_collar: tuple[int, ...]
    diameter: int
    collar_diameter: int
    isolated: bool
    terminal: bool = False
    touches_boundary: bool = False
    straddled: tuple[int, ...] = ()
    fate: str | None = None
    distance: float | None = None
    n_hat: int | None = None

    def __contains__(self, site: int) -> bool:
        return site in self.sites

    def to_dict(self) -> dict:
        return {
            "scale": self.scale, "sites": list(self.sites), "collar": list(self.collar),
            "double_collar_size": len(self.double_collar), "diameter": self.diameter,
            "collar_diameter": self.collar_diameter, "isolated": self.isolated,
            "terminal": self.terminal, "touches_boundary": self.touches_boundary,
            "straddled": list(self.straddled), "fate": self.fate,
            "distance": self.distance, "n_hat": self.n_hat,
        }


@dataclass(frozen=True)
class ScaleLevel:
    scale: int
    energy: object
    resonant: tuple[int, ...]
    blocks: tuple[Block, ...]


@dataclass(frozen=True)
class MultiscaleState:
    """Record of a cascade up to the current scale.

    Instances are immutable; :func:`advance_scale` returns a new state so that
    energy branches can fork without copying bookkeeping by hand.
    """

    hamiltonian: Hamiltonian
    schedule: ScaleSchedule
    levels: tuple[ScaleLevel, ...]
    k_bar: int
    log: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return len(self.levels)

    @property
    def energies(self) -> list:
        return [lv.energy for lv in self.levels]

    @property
    def current(self) -> ScaleLevel:
        return self.levels[-1]

    def block_containing(self, site: int, scale: int | None = None) -> Block | None:
        level = self.levels[(scale or self.k) - 1]
        for b in level.blocks:
            if site in b.sites:
                return b
        return None

    def eliminated_blocks(self, below: int) -> list[Block]:
        """Blocks removed at scales ``j < below``."""
        return [b for lv in self.levels[:below - 1] for b in lv.blocks if b.fate == "nonresonant"]

    def to_dict(self) -> dict:
        mp = self.hamiltonian.is_mp
        fmt = (lambda e: numerics.decimal_string(e, 40)) if mp else float
        return {
            "k_bar": self.k_bar,
            "schedule": self.schedule.to_dict(),
            "levels": [{
                "scale": lv.scale,
                "energy": fmt(lv.energy),
                "window": fmt(self.schedule.window(lv.scale, mp=mp)),
                "resonant": list(lv.resonant),
                "blocks": [b.to_dict() for b in lv.blocks],
            } for lv in self.levels],
            "log": list(self.log),
        }


def resonant_sites_step1(H: Hamiltonian, E1, schedule: ScaleSchedule) -> tuple[int, ...]:
    """Sites with ``|2 d gamma + v_x - E1| <= eps_1``."""
    eps1 = schedule.window(1, mp=H.is_mp)
    E1 = numerics.like(E1, H.matrix[0, 0]) if H.size else E1
    return tuple(x for x in range(H.size) if abs(H.matrix[x, x] - E1) <= eps1)


def connected_components(geometry: LatticeGeometry, sites: Iterable[int],
                         link_range: float) -> list[tuple[int, ...]]:
    """Split ``sites`` into chains whose consecutive l1 gaps are ``<= link_range``.

    Components are sorted internally and ordered by their smallest site.
    """
    if link_range <= 0:
        raise ValueError("link range must be positive")
    sites = np.array(sorted(set(int(s) for s in sites)), dtype=np.int64)
    if sites.size == 0:
        return []
    c = geometry.coords[sites]
    dist = np.abs(c[:, None, :] - c[None, :, :]).sum(-1)
    n, labels = _cc(csr_matrix(dist <= link_range), directed=False)
    groups: dict[int, list[int]] = {}
    for s, lab in zip(sites, labels):
        groups.setdefault(int(lab), []).append(int(s))
    return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])


def _on_boundary(geometry: LatticeGeometry, sites: Sequence[int]) -> bool:
    c = geometry.coords[np.asarray(sites, dtype=np.int64)]
    hi = np.asarray(geometry.sides) - 1
    return bool(np.any((c == 0) & (hi > 0)) or np.any((c == hi) & (hi > 0)))


def build_collar(state_levels: Sequence[ScaleLevel], sites: Sequence[int], scale: int,
                 geometry: LatticeGeometry, schedule: ScaleSchedule, k_bar: int) -> dict:
    """Collar and double collar of a block at ``scale``.

    The collar is the ``2 L_k`` neighbourhood of the block joined with every
    nearest-neighbour component of the union of double collars of blocks
    eliminated at earlier scales that it touches. At ``k_bar - 1``, or when it
    would span the lattice, the collar is the whole lattice.
    """
    everything = tuple(range(geometry.size))
    eliminated = [b for lv in state_levels[:scale - 1] for b in lv.blocks if b.fate == "nonresonant"]
    terminal = scale >= k_bar - 1
    if terminal:
        collar = everything
    else:
        base = set(geometry.neighbourhood(sites, schedule.collar_radius(scale)))
        union = set()
        for b in eliminated:
            union.update(b.double_collar)
        collar_set = set(base)
        for comp in connected_components(geometry, union, 1):
            if base.intersection(comp):
                collar_set.update(comp)
        collar = tuple(sorted(collar_set))
        if geometry.set_diameter(collar) >= geometry.diam:
            collar, terminal = everything, True
    inside = set(collar)
    straddled = tuple(i for i, b in enumerate(eliminated)
                      if 0 < len(inside.intersection(b.sites)) < len(b.sites))
    double = geometry.neighbourhood(collar, schedule.double_collar_radius(scale))
    return {
        "collar": collar,
        "double_collar": double,
        "terminal": terminal,
        "touches_boundary": _on_boundary(geometry, collar),
        "straddled": straddled,
        "collar_diameter": geometry.set_diameter(collar),
    }


def _make_blocks(levels: Sequence[ScaleLevel], resonant: Sequence[int], scale: int,
                 H: Hamiltonian, schedule: ScaleSchedule, k_bar: int) -> tuple[Block, ...]:
    geom = H.geometry
    blocks = []
    for comp in connected_components(geom, resonant, schedule.link_range(scale)):
        diam = geom.set_diameter(comp)
        info = build_collar(levels, comp, scale, geom, schedule, k_bar)
        blocks.append(Block(scale=scale, sites=comp, diameter=diam,
                            isolated=diam <= schedule.length(scale), **info))
    return tuple(blocks)


def start_cascade(H: Hamiltonian, schedule: ScaleSchedule, E1) -> MultiscaleState:
    """Scale-1 state: resonant sites, their blocks and collars."""
    with numerics.working_precision(H.precision):
        if H.is_mp:
            E1 = numerics.to_mp(E1)
        # a schedule that stops before k_bar leaves branches truncated, not terminal
        k_bar = schedule.k_bar(H.geometry.diam)
        resonant = resonant_sites_step1(H, E1, schedule)
        level = ScaleLevel(1, E1, resonant, ())
        blocks = _make_blocks([level], resonant, 1, H, schedule, k_bar)
        return MultiscaleState(H, schedule, (replace(level, blocks=blocks),), k_bar)


def local_eliminator(H: Hamiltonian, block: Block) -> tuple[Eliminator, np.ndarray]:
    """Eliminator for ``H`` on the collar with the block kept.

    Returns the eliminator and the collar site array (parent ordering).
    """
    collar = np.asarray(block.collar, dtype=np.int64)
    pos = {s: i for i, s in enumerate(block.collar)}
    partition = BlockPartition.from_keep(len(collar), [pos[s] for s in block.sites])
    return Eliminator(H.submatrix(collar), partition), collar


def localized_operator(H: Hamiltonian, block: Block, lam) -> SchurComplement:
    """One-shot Schur complement of ``H`` on the collar onto the block at ``lam``."""
    with numerics.working_precision(H.precision):
        elim, _ = local_eliminator(H, block)
        return elim.at(lam)


def resonance_test(F: SchurComplement | np.ndarray, E, eps) -> bool:
    """``dist(spec F, E) <= eps`` (closed)."""
    M = F.matrix if isinstance(F, SchurComplement) else F
    if M.shape[0] == 0:
        raise ValueError("empty block")
    w = numerics.eigvalsh(M)
    return min(abs(x - E) for x in w) <= eps


def advance_scale(state: MultiscaleState, E_next) -> MultiscaleState:
    """Apply the removal rule at scale ``k`` and build scale ``k + 1``.

    Isolated blocks whose localized operator at ``E_next`` has no eigenvalue
    within ``eps_{k+1}`` are removed; all other blocks survive. For surviving
    isolated blocks the number of eigenvalues in ``[E_next +- eps_{k+1}]`` is
    recorded as ``n_hat``.

    Raises
    ------
    ValueError
        If ``|E_next - E_k| > eps_k / 3``.
    """
    H, sched = state.hamiltonian, state.schedule
    k = state.k
    with numerics.working_precision(H.precision):
        mp = H.is_mp
        if mp:
            E_next = numerics.to_mp(E_next)
        Ek = state.current.energy
        budget = sched.window(k, mp=mp) / 3
        if abs(E_next - Ek) > budget * (1 + 1e-12):
            raise ValueError(f"energy shift {float(abs(E_next - Ek)):.3e} exceeds eps_k/3 = {float(budget):.3e}")
        eps_next = sched.window(k + 1, mp=mp)
        window = SpectralWindow(E_next, eps_next)
        log = list(state.log)
        fates, removed = [], set()
        for b in state.current.blocks:
            if not b.isolated:
                fates.append(replace(b, fate="survives"))
                continue
            try:
                w = numerics.eigvalsh(localized_operator(H, b, E_next).matrix)
            except NearSingularElimination as exc:
                log.append(f"k={k} block {b.sites[0]}: near-singular collar ({exc}); kept")
                fates.append(replace(b, fate="near-singular"))
                continue
            dist = min(abs(x - E_next) for x in w)
            if dist <= eps_next:
                n_hat = sum(1 for x in w if window.lo <= x <= window.hi)
                fates.append(replace(b, fate="survives", distance=float(dist), n_hat=n_hat))
            else:
                fates.append(replace(b, fate="nonresonant", distance=float(dist)))
                removed.update(b.sites)
        levels = list(state.levels)
        levels[-1] = replace(state.current, blocks=tuple(fates))
        resonant = tuple(x for x in state.current.resonant if x not in removed)
        nxt = ScaleLevel(k + 1, E_next, resonant, ())
        blocks = _make_blocks(levels + [nxt], resonant, k + 1, H, sched, state.k_bar)
        levels.append(replace(nxt, blocks=blocks))
        return MultiscaleState(H, sched, tuple(levels), state.k_bar, tuple(log))


def fixed_energy_cascade(H: Hamiltonian, schedule: ScaleSchedule, E,
                         kmax: int | None = None) -> MultiscaleState:
    """Run the cascade at a constant energy until ``k_bar - 1``, the end of the schedule or an empty set."""
    state = start_cascade(H, schedule, E)
    top = min(state.k_bar - 1, schedule.kmax)
    if kmax is not None:
        top = min(top, kmax)
    while state.k < top and state.current.resonant:
        state = advance_scale(state, state.current.energy)
    return state


# --------------------------------------------------------------------------
# measured bounds

def truncation_error(state: MultiscaleState, lam, scale: int | None = None) -> float:
    """``|| F^(k)_lam - (direct sum of localized operators) ||``.

    ``F^(k)`` is the Schur complement of the whole ``H`` onto ``R^(k)``.
    """
    H = state.hamiltonian
    level = state.levels[(scale or state.k) - 1]
    if not level.resonant:
        return 0.0
    with numerics.working_precision(H.precision):
        pos = {s: i for i, s in enumerate(level.resonant)}
        order = list(level.resonant) + [x for x in range(H.size) if x not in pos]
        K = H.submatrix(order)
        full = schur_complement(K, BlockPartition.from_keep(len(order), range(len(pos))), lam).matrix
        approx = numerics.zeros(full.shape, mp=H.is_mp)
        for b in level.blocks:
            idx = np.asarray([pos[s] for s in b.sites])
            approx[np.ix_(idx, idx)] = localized_operator(H, b, lam).matrix
        return numerics.norm2(full - approx)


def lipschitz_samples(H: Hamiltonian, block: Block, E, half_width, count: int = 5) -> list[tuple[float, float]]:
    """Pairs ``(|lam - E|, ||F_lam - F_E||)`` for evenly spaced ``lam`` in the window."""
    with numerics.working_precision(H.precision):
        elim, _ = local_eliminator(H, block)
        F_E = elim.at(E).matrix
        out = []
        for t in np.linspace(-1.0, 1.0, count):
            if t == 0:
                continue
            lam = E + numerics.like(t, E) * half_width
            diff = elim.at(lam).matrix - F_E
            out.append((float(abs(lam - E)), numerics.norm2(diff)))
        return out


def kernel_entries(H: Hamiltonian, block: Block, lam) -> list[tuple[int, int, int, float]]:
    """Entries of ``-(H_{collar \\ B} - lam)^{-1} H_{collar \\ B, B}``.

    Returns ``(x, y, |x - y|, |G_xy|)`` for ``x`` in the collar interior and
    ``y`` in the block. Magnitudes stay in the working arithmetic (mpfr for
    multiprecision Hamiltonians) so that entries below the float range survive.
    """
    with numerics.working_precision(H.precision):
        F = localized_operator(H, block, lam)
        collar = block.collar
        keep = [collar[i] for i in F.partition.keep]
        elim = [collar[i] for i in F.partition.eliminate]
        G = F.resolvent_coupling
        geom = H.geometry
        out = []
        for a, x in enumerate(elim):
            for b, y in enumerate(keep):
                out.append((x, y, geom.distance(x, y), abs(G[a, b])))
        return out
