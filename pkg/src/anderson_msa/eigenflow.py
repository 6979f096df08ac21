"""Energy-following procedure: eigenpairs of ``H`` from local data.

From a start site ``x`` the procedure begins at ``E_1 = 2 d gamma + v_x`` and,
at every scale, solves ``lam in spec F_lam`` for the localized operator of the
block containing ``x`` inside ``[E_k +- eps_k / 3]``. Each solution is
snapped to the grid ``(eps_{k+1} / 2) Z`` and becomes the next probe energy,
so the search forks into branches. Once the collar of ``x``'s block is the whole
lattice the solutions are exact eigenvalues of ``H`` and are lifted to
eigenvectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import gmpy2
import numpy as np

from . import numerics
from .lattice import Hamiltonian
from .multiscale import (Block, MultiscaleState, ScaleSchedule, advance_scale, local_eliminator,
                         localized_operator, start_cascade)
from .schur import (BlockPartition, NearSingularElimination, NoConvergence, SpectralWindow,
                    fixed_point_eigenvalues, relative_residual, schur_complement)

DEFAULT_FANOUT = 64
ENVELOPE_FACTOR = 0.31


def snap_energy(solution, eps):
    """Nearest multiple of ``eps / 2``; exact midpoints go to the smaller one.

    Returns ``(E, m)`` with ``E = m * eps / 2``.

    >>> snap_energy(0.0015, 0.002)[0]
    0.001
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    grid = eps / 2
    q = solution / grid
    if numerics.is_mp(q):
        base = gmpy2.floor(q)
        frac = q - base
        m = int(base)
        ulp = numerics.unit_roundoff(q) * max(abs(q), 1)
    else:
        base = math.floor(q)
        frac = q - base
        m = int(base)
        ulp = np.spacing(max(abs(q), 1.0))
    if frac > 0.5 + 4 * ulp:
        m += 1
    return m * grid, m


def _snap_within_budget(solution, eps_next, center, budget):
    """Snap, then step one grid point back toward ``center`` if the shift budget breaks."""
    E, m = snap_energy(solution, eps_next)
    grid = eps_next / 2
    if abs(E - center) > budget:
        m += -1 if E > center else 1
        E = m * grid
    return E, m


@dataclass
class EnergyBranch:
    """History of one path through the procedure."""

    start_site: int
    energy_history: list = field(default_factory=list)
    grid_index: list = field(default_factory=list)
    block_history: list = field(default_factory=list)
    hat_n_history: list = field(default_factory=list)
    terminal: bool = False
    status: str = "open"
    note: str = ""

    def fork(self) -> "EnergyBranch":
        return EnergyBranch(self.start_site, list(self.energy_history), list(self.grid_index),
                            list(self.block_history), list(self.hat_n_history))

    def k_hat(self) -> int:
        """Largest scale at which the block grew or the previous count exceeded one."""
        best = 0
        prev_sites: tuple[int, ...] = (self.start_site,)
        prev_count = 1
        for j, sites in enumerate(self.block_history, start=1):
            if set(sites) - set(prev_sites) or (prev_count or 0) > 1:
                best = j
            prev_sites = sites
            prev_count = self.hat_n_history[j - 1] if j - 1 < len(self.hat_n_history) else None
        return best

    def to_dict(self, mp: bool = False) -> dict:
        fmt = (lambda e: numerics.decimal_string(e, 40)) if mp else float
        return {
            "start_site": self.start_site,
            "energies": [fmt(e) for e in self.energy_history],
            "grid_index": list(self.grid_index),
            "blocks": [list(b) for b in self.block_history],
            "hat_n": list(self.hat_n_history),
            "terminal": self.terminal,
            "status": self.status,
            "note": self.note,
        }


@dataclass
class EigenpairApprox:
    branch: EnergyBranch
    eigenvalue: object
    eigenvector: np.ndarray
    residual: float
    psi_norm: float
    hat_n_history: list
    k_hat: int
    cluster_id: int

    def to_dict(self, mp: bool = False, vectors: bool = False) -> dict:
        out = {
            "start_site": self.branch.start_site,
            "eigenvalue": numerics.decimal_string(self.eigenvalue, 40) if mp else float(self.eigenvalue),
            "residual": self.residual,
            "psi_norm": self.psi_norm,
            "hat_n": list(self.hat_n_history),
            "k_hat": self.k_hat,
            "cluster_id": self.cluster_id,
            "energies": self.branch.to_dict(mp)["energies"],
        }
        if vectors:
            out["eigenvector"] = [float(v) for v in self.eigenvector]
        return out


@dataclass
class EFPResult:
    start_site: int
    eigenpairs: list[EigenpairApprox]
    branches: list[EnergyBranch]
    log: list[str]

    @property
    def overflow(self) -> bool:
        return any(b.status == "overflow" for b in self.branches)

    @property
    def truncated(self) -> bool:
        return any(b.status == "truncated" for b in self.branches)


def _hat_n(state: MultiscaleState, block: Block) -> int | None:
    """Count of localized eigenvalues near the next energy, if the cascade went past ``block``."""
    k = block.scale
    if k >= state.k:
        return None
    recorded = next((b for b in state.levels[k - 1].blocks if b.sites == block.sites), None)
    if recorded is not None and recorded.n_hat is not None:
        return recorded.n_hat
    H = state.hamiltonian
    E = state.levels[k].energy
    eps = state.schedule.window(k + 1, mp=H.is_mp)
    try:
        w = numerics.eigvalsh(localized_operator(H, block, E).matrix)
    except NearSingularElimination:
        return None
    return sum(1 for x in w if E - eps <= x <= E + eps)


def sweep_block(state: MultiscaleState, block: Block, window: SpectralWindow):
    """Fixed points of the block's localized operator inside ``window``."""
    H = state.hamiltonian
    elim, collar = local_eliminator(H, block)
    return fixed_point_eigenvalues(elim.K, elim.partition, window), elim, collar


def efp_step(state: MultiscaleState, branch: EnergyBranch) -> list[tuple[object, int]]:
    """Candidate next energies ``(E_{k+1}, m)`` for the block containing the start site."""
    H, sched = state.hamiltonian, state.schedule
    k = state.k
    block = state.block_containing(branch.start_site)
    if block is None:
        return []
    with numerics.working_precision(H.precision):
        mp = H.is_mp
        Ek = state.current.energy
        budget = sched.window(k, mp=mp) / 3
        fps, _, _ = sweep_block(state, block, SpectralWindow(Ek, budget))
        eps_next = sched.window(k + 1, mp=mp)
        out, seen = [], set()
        for fp in fps:
            E, m = _snap_within_budget(fp.value, eps_next, Ek, budget)
            if m not in seen:
                seen.add(m)
                out.append((E, m))
        return out


def _energy_key(E) -> str:
    return numerics.decimal_string(E, 40) if numerics.is_mp(E) else repr(float(E))


def efp_run(H: Hamiltonian, schedule: ScaleSchedule, x: int,
            fanout_cap: int = DEFAULT_FANOUT) -> EFPResult:
    """Explore every branch from start site ``x`` depth first.

    Branch-level failures (near-singular collars, non-convergence, truncated
    schedules, fan-out overflow) are recorded on the branch and never abort
    the run.
    """
    with numerics.working_precision(H.precision):
        E1 = H.diagonal_energy(x)
        root = EnergyBranch(int(x))
        stack = [(start_cascade(H, schedule, E1), root)]
        branches: list[EnergyBranch] = []
        pairs: list[EigenpairApprox] = []
        log: list[str] = []
        seen: set = set()
        spawned = 1
        cluster = 0
        while stack:
            state, br = stack.pop()
            branches.append(br)
            block = state.block_containing(x)
            br.energy_history.append(state.current.energy)
            if block is None:
                br.status, br.note = "died", f"start site left the resonant set at k={state.k}"
                continue
            br.block_history.append(block.sites)
            if state.k > 1:
                prev = state.block_containing(x, state.k - 1)
                br.hat_n_history.append(_hat_n(state, prev) if prev is not None else None)
            key = (state.k, _energy_key(state.current.energy), block.sites)
            if key in seen:
                br.status, br.note = "merged", "duplicate of an explored branch"
                continue
            seen.add(key)
            try:
                if block.terminal:
                    found = _terminal_pairs(state, block, br, cluster)
                    pairs.extend(found)
                    cluster += len({p.cluster_id for p in found})
                    br.terminal, br.status = True, "terminal"
                    if not found:
                        br.note = "no eigenvalue in the final window"
                    continue
                if state.k >= schedule.kmax:
                    br.status, br.note = "truncated", f"schedule ends at k={schedule.kmax}"
                    continue
                candidates = efp_step(state, br)
            except (NearSingularElimination, NoConvergence) as exc:
                br.status, br.note = "error", f"k={state.k}: {exc}"
                log.append(f"x={x} k={state.k}: {exc}")
                continue
            if not candidates:
                br.status, br.note = "died", f"no solution in the sweep window at k={state.k}"
                continue
            br.status = "expanded"
            children = []
            for E, m in candidates:
                if spawned >= fanout_cap:
                    br.status, br.note = "overflow", f"fan-out cap {fanout_cap} reached"
                    log.append(f"x={x}: fan-out cap reached")
                    break
                try:
                    child_state = advance_scale(state, E)
                except NearSingularElimination as exc:
                    log.append(f"x={x} k={state.k}: {exc}")
                    continue
                child = br.fork()
                child.grid_index.append(m)
                children.append((child_state, child))
                spawned += 1
            stack.extend(reversed(children))
        return EFPResult(int(x), pairs, branches, log)


def _terminal_pairs(state: MultiscaleState, block: Block, br: EnergyBranch, cluster0: int) -> list[EigenpairApprox]:
    H, sched = state.hamiltonian, state.schedule
    k = state.k
    window = SpectralWindow(state.current.energy, sched.window(k, mp=H.is_mp) / 3)
    fps, elim, collar = sweep_block(state, block, window)
    out = []
    cluster = cluster0 - 1
    last = None
    tol = 10 * numerics.default_tolerance(elim.K) * max(1.0, abs(float(window.center)))
    for fp in fps:
        if last is None or abs(fp.value - last) > tol:
            cluster += 1
        last = fp.value
        psi = reconstruct_eigenvector(state, block, fp.vector, fp.value)
        psi_norm = numerics.norm2(psi)
        residual = relative_residual(H.matrix, fp.value, psi)
        unit = psi / numerics.sqrt(psi @ psi)
        fin = br.fork()
        fin.terminal, fin.status = True, "eigenpair"
        fin.energy_history.append(fp.value)
        out.append(EigenpairApprox(fin, fp.value, unit, residual, psi_norm,
                                   list(br.hat_n_history), br.k_hat(), cluster))
    return out


def reconstruct_eigenvector(state: MultiscaleState, block: Block, phi_top: np.ndarray, lam) -> np.ndarray:
    """Lift a block eigenvector of the localized operator to the whole lattice.

    Inside the collar the amplitudes are ``-(H_int - lam)^{-1} H_{int,B} phi``;
    outside the collar they are zero.
    """
    H = state.hamiltonian
    with numerics.working_precision(H.precision):
        elim, collar = local_eliminator(H, block)
        local = elim.lift(lam, np.asarray(phi_top))
        psi = numerics.zeros(H.size, mp=H.is_mp)
        psi[collar] = local
        return psi


def staged_lift(K: np.ndarray, chain: Sequence[Sequence[int]], phi: np.ndarray, lam) -> np.ndarray:
    """Lift through a nested chain of index sets, one shell at a time.

    ``chain[0]`` carries ``phi``; every later set contains the previous one and
    the last set is all of ``K``. Each stage eliminates everything outside the
    current set, then solves for the new shell; composition of Schur
    complements makes this agree with the one-shot lift.
    """
    n = K.shape[0]
    mp = numerics.is_mp(K)
    psi = numerics.zeros(n, mp=mp)
    inner = list(chain[0])
    psi[inner] = phi
    for outer in chain[1:]:
        outer = list(outer)
        rest = [i for i in range(n) if i not in set(outer)]
        order = outer + rest
        part = BlockPartition.from_keep(n, range(len(outer)))
        sub = K[np.ix_(order, order)]
        F = schur_complement(sub, part, lam).matrix if rest else sub
        pos = {s: i for i, s in enumerate(outer)}
        shell = [s for s in outer if s not in set(inner)]
        a = [pos[s] for s in inner]
        b = [pos[s] for s in shell]
        if shell:
            Dl = F[np.ix_(b, b)].copy()
            idx = np.arange(len(b))
            Dl[idx, idx] = Dl[idx, idx] - lam
            psi[shell] = -numerics.solve(Dl, F[np.ix_(b, a)] @ psi[inner])
        inner = outer
    return psi


# --------------------------------------------------------------------------
# completeness

def _cluster(values: Sequence[float], tol: float) -> list[list[int]]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    groups: list[list[int]] = []
    for i in order:
        if groups and values[i] - values[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _rank(vectors: list[np.ndarray], rtol: float = 1e-6) -> int:
    if not vectors:
        return 0
    M = np.column_stack([numerics.to_float(v) for v in vectors])
    s = np.linalg.svd(M, compute_uv=False)
    return int((s > rtol * s[0]).sum())


@dataclass
class CompletenessReport:
    size: int
    matched: int
    missed: list
    spurious: list
    max_residual: float
    min_psi_norm: float
    envelope_fraction: float
    incomplete_termination: bool
    overflow: bool
    tolerance: float
    per_eigenvalue: list
    branch_status: dict

    @property
    def matched_fraction(self) -> float:
        return self.matched / self.size if self.size else 1.0

    def to_dict(self) -> dict:
        return {
            "size": self.size, "matched": self.matched, "matched_fraction": self.matched_fraction,
            "missed": self.missed, "spurious": self.spurious, "max_residual": self.max_residual,
            "min_psi_norm": self.min_psi_norm, "envelope_fraction": self.envelope_fraction,
            "incomplete_termination": self.incomplete_termination, "overflow": self.overflow,
            "tolerance": self.tolerance, "per_eigenvalue": self.per_eigenvalue,
            "branch_status": self.branch_status,
        }


def completeness_check(H: Hamiltonian, schedule: ScaleSchedule, sites: Sequence[int] | None = None,
                       tol: float | None = None, runs: Sequence[EFPResult] | None = None,
                       fanout_cap: int = DEFAULT_FANOUT) -> CompletenessReport:
    """Pool eigenvalues from every start site and match them to the dense spectrum.

    Matching is done cluster by cluster: values closer than ``tol`` are grouped
    (single linkage over oracle and procedure values together) and a cluster
    contributes ``min(oracle multiplicity, rank of the emitted eigenvectors)``
    matches.
    """
    if runs is None:
        sites = range(H.size) if sites is None else sites
        runs = [efp_run(H, schedule, x, fanout_cap) for x in sites]
    mp = H.is_mp
    with numerics.working_precision(H.precision):
        k_bar = min(schedule.k_bar(H.geometry.diam), schedule.kmax + 1)
        if tol is None:
            tol = max(1e-8, float(schedule.window(k_bar)))
        oracle = np.linalg.eigvalsh(numerics.to_float(H.matrix))
        pairs = [p for r in runs for p in r.eigenpairs]
        values = [float(v) for v in oracle] + [float(p.eigenvalue) for p in pairs]
        n0 = len(oracle)
        matched = 0
        missed, spurious, per = [], [], []
        for group in _cluster(values, tol):
            orc = [i for i in group if i < n0]
            efp = [pairs[i - n0] for i in group if i >= n0]
            rank = _rank([p.eigenvector for p in efp])
            matched += min(len(orc), rank)
            if len(orc) > rank:
                missed.extend(float(oracle[i]) for i in orc[rank:])
            if rank > len(orc):
                spurious.extend(sorted({float(p.eigenvalue) for p in efp}))
            for i in orc:
                lam0 = oracle[i]
                best = None
                for p in efp:
                    hist = p.branch.energy_history[:-1]
                    ratio = max(float(abs(E - lam0)) / float(schedule.window(j + 1, mp=mp))
                                for j, E in enumerate(hist)) if hist else 0.0
                    best = ratio if best is None else min(best, ratio)
                per.append({"eigenvalue": float(lam0), "found": bool(efp),
                            "best_envelope_ratio": best})
        env = [e["best_envelope_ratio"] for e in per]
        within = sum(1 for r in env if r is not None and r <= ENVELOPE_FACTOR)
        status: dict[str, int] = {}
        for r in runs:
            for b in r.branches:
                status[b.status] = status.get(b.status, 0) + 1
        return CompletenessReport(
            size=n0, matched=matched, missed=missed, spurious=spurious,
            max_residual=max((p.residual for p in pairs), default=0.0),
            min_psi_norm=min((p.psi_norm for p in pairs), default=float("inf")),
            envelope_fraction=within / n0 if n0 else 1.0,
            incomplete_termination=any(r.truncated for r in runs),
            overflow=any(r.overflow for r in runs),
            tolerance=tol, per_eigenvalue=per, branch_status=status)


def _distinct_pairs(pairs: Sequence[EigenpairApprox], tol: float) -> list[list[EigenpairApprox]]:
    """Group by eigenvalue cluster and keep a maximal independent subset per cluster."""
    out = []
    vals = [float(p.eigenvalue) for p in pairs]
    for group in _cluster(vals, tol):
        members = [pairs[i] for i in group]
        kept: list[EigenpairApprox] = []
        for p in members:
            if _rank([q.eigenvector for q in kept + [p]]) > len(kept):
                kept.append(p)
        out.append(kept)
    return out


def count_reachable(H: Hamiltonian, schedule: ScaleSchedule, x: int, y: int, z: int,
                    run: EFPResult | None = None, tol: float | None = None) -> int:
    """Number of distinct eigenpairs reached from ``x`` whose final block holds ``y`` and ``z``."""
    run = efp_run(H, schedule, x) if run is None else run
    tol = 1e-9 if tol is None else tol
    count = 0
    for group in _distinct_pairs(run.eigenpairs, tol):
        for p in group:
            final = p.branch.block_history[-1] if p.branch.block_history else ()
            if y in final and z in final:
                count += 1
    return count


def reachable_totals(H: Hamiltonian, schedule: ScaleSchedule, y: int, z: int,
                     runs: Sequence[EFPResult] | None = None) -> int:
    """``N_{y,z}``: the sum of :func:`count_reachable` over start sites."""
    runs = [efp_run(H, schedule, x) for x in range(H.size)] if runs is None else runs
    return sum(count_reachable(H, schedule, r.start_site, y, z, run=r) for r in runs)
