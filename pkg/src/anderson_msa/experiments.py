"""Monte Carlo ensembles: density of states, eigenfunction correlators,
minimum level spacing and resonant-set statistics.

All spectral observables use the dense spectrum of ``H`` (float64), so they do
not depend on the cascade being correct. Reports are plain dicts that
serialize deterministically.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .lattice import Hamiltonian, build_geometry, build_hamiltonian, sample_disorder
from .multiscale import fixed_energy_cascade, make_schedule

OBSERVABLES = ("dos", "correlator", "spacing", "blocks")


@dataclass
class ExperimentConfig:
    """Ensemble parameters.

    ``energies`` and ``deltas`` define the DOS windows ``[E - delta, E + delta]``;
    ``spacing_deltas`` the thresholds for ``P(min spacing < delta)``.
    """

    d: int = 1
    sides: tuple[int, ...] = (32,)
    N: int = 16
    gamma: float = 1e-3
    L0: int = 1
    alpha: float = 1.5
    schedule: str = "geometric"
    ratio: float = 0.125
    energies: tuple[float, ...] = (0.5,)
    deltas: tuple[float, ...] = (1e-3, 1e-2, 1e-1)
    spacing_deltas: tuple[float, ...] = (1e-8, 1e-6, 1e-4)
    correlator_min_distance: int = 8
    block_energy: float | None = None  # default: diagonal energy of the centre site
    trials: int = 100
    base_seed: int = 0
    observables: tuple[str, ...] = ("dos", "correlator", "spacing")

    def __post_init__(self):
        self.sides = tuple(int(s) for s in self.sides)
        self.energies = tuple(float(e) for e in self.energies)
        self.deltas = tuple(float(x) for x in self.deltas)
        self.spacing_deltas = tuple(float(x) for x in self.spacing_deltas)
        self.observables = tuple(self.observables)

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if len(self.sides) != self.d:
            raise ValueError(f"expected {self.d} sides, got {len(self.sides)}")
        unknown = set(self.observables) - set(OBSERVABLES)
        if unknown:
            raise ValueError(f"unknown observables {sorted(unknown)}")
        diam = sum(s - 1 for s in self.sides)
        if "dos" in self.observables and self.gamma > 0:
            lo = self.gamma ** (diam / 2)
            for delta in self.deltas:
                if not lo <= delta <= 1:
                    raise ValueError(f"DOS delta {delta} outside [{lo:.3e}, 1]")
        if "spacing" in self.observables and self.gamma > 0:
            lo = self.gamma ** diam
            for delta in self.spacing_deltas:
                if not lo <= delta <= 1:
                    raise ValueError(f"spacing delta {delta} outside [{lo:.3e}, 1]")

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("sides", "energies", "deltas", "spacing_deltas", "observables"):
            out[key] = list(out[key])
        return out


@dataclass
class EnsembleReport:
    config: dict
    trials: int
    failures: int
    observables: dict = field(default_factory=dict)
    per_trial: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": self.config, "trials": self.trials, "failures": self.failures,
                "observables": self.observables, "per_trial": self.per_trial}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def trial_seed(base_seed: int, index: int) -> int:
    """64-bit seed for trial ``index``, mixed from ``(base_seed, index)``."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# --------------------------------------------------------------------------
# observables

def dos_observable(H: Hamiltonian, E: float, delta: float, spectrum: np.ndarray | None = None) -> int:
    """Number of eigenvalues in ``[E - delta, E + delta]``."""
    w = np.linalg.eigvalsh(_float_matrix(H)) if spectrum is None else spectrum
    return int(np.count_nonzero((w >= E - delta) & (w <= E + delta)))


def correlator_observable(H: Hamiltonian, x: int, y: int,
                          vectors: np.ndarray | None = None) -> tuple[float, float]:
    """``S = sum_beta |phi_beta(x) phi_beta(y)|`` and ``X = S gamma^(-|x - y| / 5)``.

    With ``gamma = 0`` and ``x != y`` both are 0.
    """
    if vectors is None:
        _, vectors = np.linalg.eigh(_float_matrix(H))
    S = float(np.abs(vectors[x, :] * vectors[y, :]).sum())
    dist = H.geometry.distance(x, y)
    if H.gamma == 0:
        return (S, 0.0) if x != y else (S, S)
    return S, S * H.gamma ** (-dist / 5)


def min_spacing_observable(H: Hamiltonian | np.ndarray) -> float:
    """Smallest gap between eigenvalues (0 for an exact degeneracy).

    Accepts a Hamiltonian, a symmetric matrix or a spectrum.

    >>> min_spacing_observable(np.array([0.1, 0.2, 0.35]))
    0.1
    """
    if isinstance(H, Hamiltonian):
        w = np.linalg.eigvalsh(_float_matrix(H))
    elif np.ndim(H) == 2:
        w = np.linalg.eigvalsh(np.asarray(H, dtype=float))
    else:
        w = np.sort(np.asarray(H, dtype=float))
    if w.size < 2:
        raise ValueError("need at least two eigenvalues")
    return float(np.diff(w).min())


def _float_matrix(H: Hamiltonian) -> np.ndarray:
    return H.matrix if not H.is_mp else np.asarray(H.matrix, dtype=float)


def correlator_matrix(vectors: np.ndarray) -> np.ndarray:
    """All-pairs ``sum_beta |phi_beta(x) phi_beta(y)|``."""
    A = np.abs(vectors)
    return A @ A.T


# --------------------------------------------------------------------------
# ensembles

def _mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    mean = float(v.mean())
    err = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return mean, err


def _proportion(hits: int, n: int) -> tuple[float, float]:
    p = hits / n if n else float("nan")
    return p, (math.sqrt(p * (1 - p) / n) if n else float("nan"))


def _trial(config: ExperimentConfig, index: int) -> dict:
    geom = build_geometry(config.d, config.sides)
    seed = trial_seed(config.base_seed, index)
    H = build_hamiltonian(geom, sample_disorder(geom, config.N, seed), config.gamma)
    out: dict = {"seed": seed}
    need_vectors = "correlator" in config.observables
    if need_vectors:
        w, V = np.linalg.eigh(H.matrix)
    else:
        w, V = np.linalg.eigvalsh(H.matrix), None
    if "dos" in config.observables:
        out["dos"] = [[dos_observable(H, E, dl, w) for dl in config.deltas] for E in config.energies]
    if "spacing" in config.observables:
        out["spacing"] = min_spacing_observable(w)
    if "correlator" in config.observables:
        C = correlator_matrix(V)
        dist = np.abs(geom.coords[:, None, :] - geom.coords[None, :, :]).sum(-1)
        iu = np.triu_indices(geom.size, 1)
        D, S = dist[iu], C[iu]
        by_dist = {}
        for r in range(1, geom.diam + 1):
            sel = S[D == r]
            if sel.size:
                by_dist[r] = float(sel.mean())
        far = D >= config.correlator_min_distance
        X = S[far] * config.gamma ** (-D[far] / 5) if config.gamma > 0 else np.zeros(int(far.sum()))
        centre = {}
        if config.d == 1:
            n = geom.size
            for r in range(1, n):
                x = (n - 1 - r) // 2
                centre[r] = float(C[x, x + r])
        out["correlator"] = {"by_distance": by_dist, "exceed": int((X > 1).sum()),
                             "far_pairs": int(far.sum()), "central": centre}
    if "blocks" in config.observables:
        centre = geom.index([s // 2 for s in geom.sides])
        E = config.block_energy if config.block_energy is not None else H.diagonal_energy(centre)
        sched = make_schedule(config.L0, config.gamma, config.N, kind=config.schedule,
                              alpha=config.alpha, ratio=config.ratio, diam=geom.diam)
        state = fixed_energy_cascade(H, sched, E)
        out["blocks"] = {
            "resonant_fraction": [len(lv.resonant) / geom.size for lv in state.levels],
            "centre_resonant": [centre in lv.resonant for lv in state.levels],
            "sizes": [[len(b.sites) for b in lv.blocks] for lv in state.levels],
            "diameters": [[b.diameter for b in lv.blocks] for lv in state.levels],
            "n_hat": [[b.n_hat for b in lv.blocks if b.n_hat is not None] for lv in state.levels],
        }
    return out


def run_ensemble(config: ExperimentConfig) -> EnsembleReport:
    """Sample ``config.trials`` realizations and aggregate the requested observables.

    Trial ``i`` uses the seed :func:`trial_seed` ``(base_seed, i)``; failing
    trials are counted and skipped. Aggregation runs in trial order.
    """
    config.validate()
    rows, failures = [], 0
    for i in range(config.trials):
        try:
            rows.append(_trial(config, i))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            failures += 1
    n = len(rows)
    obs: dict = {}
    per: dict = {"seeds": [r["seed"] for r in rows]}
    if "dos" in config.observables:
        table = []
        for a, E in enumerate(config.energies):
            for b, dl in enumerate(config.deltas):
                mean, err = _mean_stderr([r["dos"][a][b] for r in rows])
                table.append({"E": E, "delta": dl, "mean": mean, "stderr": err, "trials": n})
        obs["dos"] = table
    if "spacing" in config.observables:
        vals = [r["spacing"] for r in rows]
        per["min_spacing"] = vals
        table = []
        for dl in config.spacing_deltas:
            p, err = _proportion(sum(1 for v in vals if v < dl), n)
            table.append({"delta": dl, "probability": p, "stderr": err, "trials": n})
        qs = np.quantile(vals, [0.1, 0.25, 0.5, 0.75, 0.9]).tolist() if vals else []
        obs["spacing"] = {"table": table, "quantiles": qs}
    if "correlator" in config.observables:
        dists = sorted({d for r in rows for d in r["correlator"]["by_distance"]})
        table = []
        for dd in dists:
            vals = [r["correlator"]["by_distance"][dd] for r in rows if dd in r["correlator"]["by_distance"]]
            mean, err = _mean_stderr(vals)
            central = [r["correlator"]["central"][dd] for r in rows if dd in r["correlator"]["central"]]
            med = float(np.median(central)) if central else float("nan")
            table.append({"distance": dd, "mean": mean, "stderr": err,
                          "central_median": med, "trials": len(vals)})
        far = sum(r["correlator"]["far_pairs"] for r in rows)
        hits = sum(r["correlator"]["exceed"] for r in rows)
        p, err = _proportion(hits, far)
        obs["correlator"] = {"table": table, "exceedance": {
            "min_distance": config.correlator_min_distance, "pairs": far,
            "exceed": hits, "frequency": p, "stderr": err}}
    if "blocks" in config.observables:
        depth = max((len(r["blocks"]["resonant_fraction"]) for r in rows), default=0)
        table = []
        for k in range(depth):
            # scales past the end of a trial's cascade have an empty resonant set
            fr = [r["blocks"]["resonant_fraction"][k] if k < len(r["blocks"]["resonant_fraction"]) else 0.0
                  for r in rows]
            mean, err = _mean_stderr(fr)
            hit = sum(1 for r in rows if k < len(r["blocks"]["centre_resonant"])
                      and r["blocks"]["centre_resonant"][k])
            pc, pc_err = _proportion(hit, n)
            sizes = [s for r in rows if k < len(r["blocks"]["sizes"]) for s in r["blocks"]["sizes"][k]]
            diams = [s for r in rows if k < len(r["blocks"]["diameters"]) for s in r["blocks"]["diameters"][k]]
            nh = [s for r in rows if k < len(r["blocks"]["n_hat"]) for s in r["blocks"]["n_hat"][k]]
            table.append({
                "k": k + 1, "p_resonant": mean, "stderr": err, "trials": n,
                "p_centre": pc, "p_centre_stderr": pc_err,
                "size_histogram": _histogram(sizes), "diameter_histogram": _histogram(diams),
                "n_hat_histogram": _histogram(nh),
            })
        obs["blocks"] = table
    return EnsembleReport(config.to_dict(), n, failures, obs, per)


def _histogram(values: Sequence[int]) -> dict:
    out: dict = {}
    for v in values:
        out[str(int(v))] = out.get(str(int(v)), 0) + 1
    return dict(sorted(out.items(), key=lambda kv: int(kv[0])))


def spacing_vs_N(config: ExperimentConfig, Ns: Sequence[int]) -> dict:
    """``P(min spacing < delta)`` for each ``N`` with everything else fixed.

    ``ordered`` is ``True`` when the probability at the first threshold
    strictly decreases along ``Ns``; ``None`` for a single ``N``.
    """
    rows = []
    for N in Ns:
        cfg = ExperimentConfig(**{**config.to_dict(), "N": int(N), "observables": ("spacing",)})
        rep = run_ensemble(cfg)
        for row in rep.observables["spacing"]["table"]:
            rows.append({"N": int(N), **row})
    ordered = None
    if len(Ns) >= 2:
        first = config.spacing_deltas[0]
        ps = [r["probability"] for r in rows if r["delta"] == first]
        ordered = all(b < a for a, b in zip(ps, ps[1:]))
    return {"rows": rows, "ordered": ordered}


# --------------------------------------------------------------------------
# output

def write_report(report: EnsembleReport, outdir: str | Path) -> list[Path]:
    """Write ``report.json`` and one CSV per observable; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / "report.json"]
    paths[0].write_text(report.to_json() + "\n")
    obs = report.observables
    if "dos" in obs:
        paths.append(_write_csv(outdir / "dos.csv", ["E", "delta", "mean", "stderr", "trials"], obs["dos"]))
    if "spacing" in obs:
        paths.append(_write_csv(outdir / "spacing.csv", ["delta", "probability", "stderr", "trials"],
                                obs["spacing"]["table"]))
    if "correlator" in obs:
        paths.append(_write_csv(outdir / "correlator.csv",
                                ["distance", "mean", "stderr", "central_median", "trials"],
                                obs["correlator"]["table"]))
    if "blocks" in obs:
        paths.append(_write_csv(outdir / "blocks.csv",
                                ["k", "p_resonant", "stderr", "p_centre", "p_centre_stderr", "trials"],
                                obs["blocks"]))
    return paths


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return path
