"""Synthetic operating-condition database: sampling, labeling, persistence.

Loads are drawn from a Gaussian copula (pairwise correlation applied to
the Gaussian draw) with Kumaraswamy-shaped marginals mapped onto a MW
range, dispatched by DC-OPF, and labeled per contingency by the exact
security oracle.  Every condition owns an independent RNG stream derived
from ``(seed, index, attempt)``, so generation is reproducible no matter
how the work is partitioned, and rejected (pre-fault infeasible) samples
never perturb the streams of other conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import grid as grid_mod
from .errors import GenerationStalled, InvalidCorrelation, MalformedFile

SPLIT_NAMES = ("train", "calib", "test")

# Fixed sampling recipe for the packaged six-bus pipeline.
LOAD_RANGE = (50.0, 150.0)
LOAD_CORRELATION = 0.75
KUMARASWAMY_A = 1.6
KUMARASWAMY_B = 2.8
LOAD_BUSES = (4, 5, 6)
CORRECTIVE_RANGE_MW = 20.0


@dataclass(frozen=True, eq=False)
class OperatingCondition:
    """One pre-fault steady state; features are loads, outputs, angles, flows."""

    id: int
    loads: np.ndarray
    generation: np.ndarray
    angles: np.ndarray
    flows: np.ndarray

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.loads, self.generation, self.angles, self.flows])

    def __eq__(self, other):
        return (
            isinstance(other, OperatingCondition)
            and self.id == other.id
            and np.array_equal(self.features, other.features)
        )


@dataclass(eq=False)
class LabeledDatabase:
    conditions: list[OperatingCondition]
    labels: dict[int, np.ndarray]  # contingency id -> 0/1 per condition
    splits: list[str]  # one of SPLIT_NAMES per condition
    seed: int | None = None

    def __post_init__(self):
        n = len(self.conditions)
        if len(self.splits) != n:
            raise ValueError("split tags must cover every condition")
        for c, lab in self.labels.items():
            if len(lab) != n:
                raise ValueError(f"labels for contingency {c} must cover every condition")

    def __len__(self) -> int:
        return len(self.conditions)

    @property
    def contingencies(self) -> list[int]:
        return sorted(self.labels)

    def split_indices(self, split: str) -> np.ndarray:
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}")
        return np.array([i for i, s in enumerate(self.splits) if s == split], dtype=int)

    def features_matrix(self, split: str | None = None) -> np.ndarray:
        idx = range(len(self)) if split is None else self.split_indices(split)
        return np.array([self.conditions[i].features for i in idx])

    def label_vector(self, contingency: int, split: str | None = None) -> np.ndarray:
        lab = np.asarray(self.labels[contingency], dtype=int)
        return lab if split is None else lab[self.split_indices(split)]

    def priors(self, contingency: int, split: str | None = None) -> tuple[float, float]:
        """(insecure, secure) class fractions for one contingency."""
        lab = self.label_vector(contingency, split)
        pi1 = float(np.mean(lab)) if len(lab) else 0.0
        return 1.0 - pi1, pi1

    def __eq__(self, other):
        return (
            isinstance(other, LabeledDatabase)
            and self.conditions == other.conditions
            and self.splits == other.splits
            and self.seed == other.seed
            and sorted(self.labels) == sorted(other.labels)
            and all(np.array_equal(self.labels[c], other.labels[c]) for c in self.labels)
        )


def _copula_cholesky(correlation: float, dim: int) -> np.ndarray:
    corr = np.full((dim, dim), correlation)
    np.fill_diagonal(corr, 1.0)
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise InvalidCorrelation(f"correlation {correlation} is not positive definite for dim {dim}") from exc


def kumaraswamy_ppf(u, a: float = KUMARASWAMY_A, b: float = KUMARASWAMY_B):
    """Inverse CDF of the Kumaraswamy distribution on [0, 1]."""
    u = np.asarray(u, dtype=float)
    return (1.0 - (1.0 - u) ** (1.0 / b)) ** (1.0 / a)


def _draw_load_triple(rng, chol, dim: int) -> np.ndarray:
    z = chol @ rng.standard_normal(dim)
    u = ndtr(z)
    low, high = LOAD_RANGE
    return low + (high - low) * kumaraswamy_ppf(u)


def sample_loads(n: int, seed: int, correlation: float = LOAD_CORRELATION, dim: int = 3) -> np.ndarray:
    """Draw ``n`` correlated load tuples (MW) via the Gaussian copula.

    Each row uses the independent stream ``(seed, row, 0)``; the result
    for row ``i`` never depends on ``n`` or on other rows.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    chol = _copula_cholesky(correlation, dim)
    out = np.empty((n, dim))
    for i in range(n):
        out[i] = _draw_load_triple(np.random.default_rng([seed, i, 0]), chol, dim)
    return out


def build_database(
    grid: grid_mod.GridModel,
    n: int,
    contingencies,
    seed: int,
    splits: tuple[int, int, int],
    correlation: float = LOAD_CORRELATION,
    load_buses=LOAD_BUSES,
    corrective_range: float = CORRECTIVE_RANGE_MW,
) -> LabeledDatabase:
    """Sample, dispatch and label ``n`` operating conditions.

    Conditions whose loads admit no feasible pre-fault dispatch are
    resampled from the same per-condition stream (attempt counter bumps),
    keeping the load distribution unbiased within the feasible region.

    Raises
    ------
    GenerationStalled
        If more than half of all sampled load tuples are pre-fault
        infeasible, which signals bad network data.
    """
    contingencies = list(contingencies)
    for c in contingencies:
        grid.line_by_id(c)
    if sum(splits) != n:
        raise ValueError(f"splits {splits} must sum to n={n}")
    chol = _copula_cholesky(correlation, len(load_buses))
    load_pos = [grid.bus_position(b) for b in load_buses]
    inc = np.zeros((grid.n_buses, len(grid.generators)))
    for j, g in enumerate(grid.generators):
        inc[grid.bus_position(g.bus), j] = 1.0

    conditions: list[OperatingCondition] = []
    labels = {c: np.zeros(n, dtype=int) for c in contingencies}
    attempts = 0
    rejects = 0
    for i in range(n):
        for attempt in range(1000):
            attempts += 1
            triple = _draw_load_triple(np.random.default_rng([seed, i, attempt]), chol, len(load_buses))
            bus_loads = np.zeros(grid.n_buses)
            bus_loads[load_pos] = triple
            dispatch = grid_mod.solve_dcopf(grid, bus_loads)
            if dispatch.feasible:
                break
            rejects += 1
            if attempts >= 50 and rejects > 0.5 * attempts:
                raise GenerationStalled(
                    f"{rejects}/{attempts} sampled conditions are pre-fault infeasible"
                )
        else:
            raise GenerationStalled(f"condition {i}: no feasible dispatch in 1000 attempts")

        injections = inc @ dispatch.outputs - bus_loads
        flow = grid_mod.solve_dc_power_flow(grid, injections)
        conditions.append(
            OperatingCondition(
                id=i,
                loads=triple,
                generation=dispatch.outputs.copy(),
                angles=flow.angles.copy(),
                flows=flow.flows.copy(),
            )
        )
        for c in contingencies:
            labels[c][i] = grid_mod.assess_security(grid, bus_loads, dispatch.outputs, c, corrective_range)

    tags = [SPLIT_NAMES[0]] * splits[0] + [SPLIT_NAMES[1]] * splits[1] + [SPLIT_NAMES[2]] * splits[2]
    return LabeledDatabase(conditions=conditions, labels=labels, splits=tags, seed=seed)


# -- dataset.csv -------------------------------------------------------------

_N_LOADS, _N_GENS, _N_ANGLES, _N_FLOWS = 3, 3, 6, 11


def _header(contingencies) -> list[str]:
    cols = ["id"]
    cols += [f"load{k}" for k in range(1, _N_LOADS + 1)]
    cols += [f"gen{k}" for k in range(1, _N_GENS + 1)]
    cols += [f"angle{k}" for k in range(1, _N_ANGLES + 1)]
    cols += [f"flow{k}" for k in range(1, _N_FLOWS + 1)]
    cols.append("split")
    cols += [f"label_c{c}" for c in contingencies]
    return cols


def save_database(db: LabeledDatabase, path) -> None:
    """Write ``dataset.csv``; floats carry 17 significant digits."""
    cons = sorted(db.labels)
    lines = []
    if db.seed is not None:
        lines.append(f"# seed={db.seed}")
    lines.append(",".join(_header(cons)))
    for i, cond in enumerate(db.conditions):
        row = [str(cond.id)]
        row += [f"{v:.17g}" for v in cond.features]
        row.append(db.splits[i])
        row += [str(int(db.labels[c][i])) for c in cons]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_database(path) -> LabeledDatabase:
    """Parse ``dataset.csv``; raises MalformedFile with the offending line."""
    raw = Path(path).read_text().splitlines()
    seed = None
    lineno = 0
    if raw and raw[0].startswith("#"):
        lineno = 1
        meta = raw[0].lstrip("# ").strip()
        if meta.startswith("seed="):
            try:
                seed = int(meta[5:])
            except ValueError as exc:
                raise MalformedFile("unparseable seed metadata", line=1) from exc
        raw = raw[1:]
    if not raw:
        raise MalformedFile("empty dataset file", line=1)

    header = raw[0].split(",")
    lineno += 1
    n_fixed = 1 + _N_LOADS + _N_GENS + _N_ANGLES + _N_FLOWS + 1
    expected_fixed = _header([])
    if header[: len(expected_fixed)] != expected_fixed:
        raise MalformedFile("unexpected header columns (missing feature or split column?)", line=lineno)
    cons = []
    for col in header[n_fixed:]:
        if not col.startswith("label_c"):
            raise MalformedFile(f"unexpected trailing column {col!r}", line=lineno)
        try:
            cons.append(int(col[len("label_c"):]))
        except ValueError as exc:
            raise MalformedFile(f"bad label column {col!r}", line=lineno) from exc
    if not cons:
        raise MalformedFile("no label columns", line=lineno)

    conditions, splits = [], []
    labels = {c: [] for c in cons}
    for row_text in raw[1:]:
        lineno += 1
        if not row_text.strip():
            continue
        parts = row_text.split(",")
        if len(parts) != len(header):
            raise MalformedFile(f"expected {len(header)} columns, got {len(parts)}", line=lineno)
        try:
            cid = int(parts[0])
            values = [float(v) for v in parts[1: n_fixed - 1]]
        except ValueError as exc:
            raise MalformedFile(f"unparseable numeric field: {exc}", line=lineno) from exc
        split = parts[n_fixed - 1]
        if split not in SPLIT_NAMES:
            raise MalformedFile(f"unknown split tag {split!r}", line=lineno)
        vals = np.array(values)
        o = 0
        loads, o = vals[o: o + _N_LOADS], o + _N_LOADS
        gens, o = vals[o: o + _N_GENS], o + _N_GENS
        angles, o = vals[o: o + _N_ANGLES], o + _N_ANGLES
        flows = vals[o: o + _N_FLOWS]
        conditions.append(OperatingCondition(cid, loads, gens, angles, flows))
        splits.append(split)
        for c, text in zip(cons, parts[n_fixed:]):
            if text not in ("0", "1"):
                raise MalformedFile(f"label must be 0 or 1, got {text!r}", line=lineno)
            labels[c].append(int(text))

    return LabeledDatabase(
        conditions=conditions,
        labels={c: np.array(v, dtype=int) for c, v in labels.items()},
        splits=splits,
        seed=seed,
    )
