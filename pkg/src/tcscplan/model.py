"""Sparse MILP container with a named variable registry and LP-format export."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

INF = float("inf")

_PREFIX = {"P": "P_k", "theta": "theta_i", "Pg": "Pg_n", "dPup": "dPup_n",
           "dPdn": "dPdn_n", "dPd": "dPd_m", "w": "w_k", "z": "z_k", "y": "y_k"}


def column_name(symbol: str, idx: int, c: int | None = None, t: int | None = None) -> str:
    if symbol == "delta":
        return f"delta_k{idx}"
    return f"{_PREFIX.get(symbol, symbol + '_')}{idx}_c{c}_t{t}"


class VariableRegistry:
    """Maps ``(symbol, index, state, level)`` keys to column numbers."""

    def __init__(self):
        self.keys: list[tuple] = []
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self._index: dict[tuple, int] = {}
        self.states: list = []

    def __len__(self) -> int:
        return len(self.keys)

    def add(self, symbol: str, idx: int, c: int | None = None, t: int | None = None, *,
            lb: float, ub: float, integer: bool = False) -> int:
        key = (symbol, idx, c, t)
        if key in self._index:
            raise KeyError(f"duplicate variable {key}")
        if not (np.isfinite(lb) and np.isfinite(ub)) or lb > ub:
            raise ValueError(f"variable {key} needs finite bounds, got [{lb}, {ub}]")
        col = len(self.keys)
        self._index[key] = col
        self.keys.append(key)
        self.names.append(column_name(symbol, idx, c, t))
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(integer)
        return col

    def col(self, symbol: str, idx: int, c: int | None = None, t: int | None = None) -> int:
        return self._index[(symbol, idx, c, t)]

    def get(self, symbol: str, idx: int, c: int | None = None, t: int | None = None) -> int | None:
        return self._index.get((symbol, idx, c, t))

    def columns(self, symbol: str) -> list[int]:
        return [i for i, k in enumerate(self.keys) if k[0] == symbol]

    def count(self, symbol: str) -> int:
        return sum(1 for k in self.keys if k[0] == symbol)


class RowBuilder:
    """Accumulates sparse rows as coefficient triplets."""

    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.names: list[str] = []

    def __len__(self) -> int:
        return len(self.sense)

    def add(self, terms: Iterable[tuple[int, float]], sense: str, rhs: float, name: str = "") -> int:
        if sense not in ("<", "=", ">"):
            raise ValueError(f"bad sense {sense!r}")
        if not np.isfinite(rhs):
            raise ValueError(f"row {name}: rhs must be finite")
        r = len(self.sense)
        merged: dict[int, float] = {}
        for col, val in terms:
            merged[col] = merged.get(col, 0.0) + val
        for col, val in merged.items():
            if val != 0.0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(val)
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        self.names.append(name or f"r{r}")
        return r


@dataclass
class MilpModel:
    """min c'x subject to sparse rows and column bounds; some columns binary."""
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    names: list[str]
    row_names: list[str]
    registry: VariableRegistry | None = None
    # columns to enumerate in brute force (the placement binaries)
    primary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    # column -> columns whose bounds collapse to 0 when that column is fixed at 0
    implications: dict[int, list[int]] = field(default_factory=dict)
    obj_offset: float = 0.0
    # (indicator, signal) column pairs; a rounding heuristic sets the
    # indicator to 1 where the signal is negative
    sign_links: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))

    @classmethod
    def from_parts(cls, registry: VariableRegistry, rows: RowBuilder, c, **kw) -> "MilpModel":
        n = len(registry)
        a = sp.csr_matrix((rows.vals, (rows.rows, rows.cols)), shape=(len(rows), n))
        return cls(a, np.array(rows.sense), np.array(rows.rhs), np.asarray(c, dtype=float),
                   np.array(registry.lb), np.array(registry.ub),
                   np.array(registry.integer, dtype=bool), list(registry.names),
                   list(rows.names), registry=registry, **kw)

    @classmethod
    def from_arrays(cls, c, A, sense, rhs, lb=None, ub=None, integer=None) -> "MilpModel":
        c = np.asarray(c, dtype=float)
        n = c.size
        a = A.tocsr() if sp.issparse(A) else sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, n))
        m = a.shape[0]
        sense = np.array(list(sense) if not isinstance(sense, str) else [sense] * m)
        return cls(a, sense, np.asarray(rhs, dtype=float).reshape(m), c,
                   np.zeros(n) if lb is None else np.asarray(lb, dtype=float),
                   np.full(n, INF) if ub is None else np.asarray(ub, dtype=float),
                   np.zeros(n, bool) if integer is None else np.asarray(integer, dtype=bool),
                   [f"x{j}" for j in range(n)], [f"r{i}" for i in range(m)])

    @property
    def n_cols(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.rhs.size

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.sense == "<", -INF, self.rhs)
        hi = np.where(self.sense == ">", INF, self.rhs)
        return lo, hi

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.obj_offset

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Per-row constraint violation (0 when satisfied)."""
        act = self.A @ x
        lo, hi = self.row_bounds()
        return np.maximum(lo - act, 0) + np.maximum(act - hi, 0)

    def is_feasible(self, x: np.ndarray, tol: float = 1e-6) -> bool:
        scale = 1.0 + np.abs(self.rhs)
        return bool(np.all(self.residuals(x) <= tol * scale)
                    and np.all(x >= self.lb - tol) and np.all(x <= self.ub + tol))

    def write_lp(self, path=None) -> str:
        """Export in CPLEX LP text format using the registry column names."""
        out = ["\\ TCSC planning model", "Minimize", " obj:"]
        out += _terms(self.c, self.names)
        if self.obj_offset:
            out.append(f"  + {_num(self.obj_offset)} constant_one")
        out.append("Subject To")
        a = self.A.tocsr()
        op = {"<": "<=", "=": "=", ">": ">="}
        for i in range(self.n_rows):
            lo, hi = a.indptr[i], a.indptr[i + 1]
            vec = dict(zip(a.indices[lo:hi], a.data[lo:hi]))
            body = " ".join(f"{'+' if v >= 0 else '-'} {_num(abs(v))} {self.names[j]}"
                            for j, v in sorted(vec.items())) or "0 constant_one"
            out.append(f" {self.row_names[i]}: {body} {op[self.sense[i]]} {_num(self.rhs[i])}")
        out.append("Bounds")
        for j, name in enumerate(self.names):
            out.append(f" {_num(self.lb[j])} <= {name} <= {_num(self.ub[j])}")
        if self.obj_offset:
            out.append(" 1.0 <= constant_one <= 1.0")
        bins = [self.names[j] for j in np.flatnonzero(self.integer)]
        if bins:
            out.append("Binaries")
            out += [f" {name}" for name in bins]
        out.append("End")
        text = "\n".join(out) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _num(v) -> str:
    v = float(v)
    if np.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return repr(v)


def _terms(coefs: np.ndarray, names: list[str], per_line: int = 4) -> list[str]:
    parts = [f"{'+' if v >= 0 else '-'} {_num(abs(v))} {names[j]}"
             for j, v in enumerate(coefs) if v != 0.0]
    if not parts:
        return ["  0 constant_one"]
    return ["  " + " ".join(parts[i:i + per_line]) for i in range(0, len(parts), per_line)]


def read_lp(text: str) -> dict:
    """Parse text written by :meth:`MilpModel.write_lp` back into arrays.

    Only understands the subset that ``write_lp`` emits.
    """
    section = None
    obj_tokens: list[str] = []
    rows = []
    bounds = {}
    binaries = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        low = line.lower()
        if low in ("minimize", "subject to", "bounds", "binaries", "end"):
            section = low
            continue
        if section == "minimize":
            obj_tokens += line.replace("obj:", "").split()
        elif section == "subject to":
            name, body = line.split(":", 1)
            toks = body.split()
            op, rhs = toks[-2], float(toks[-1])
            rows.append((name.strip(), _parse_terms(toks[:-2]), op, rhs))
        elif section == "bounds":
            lo, _, name, _, hi = line.split()
            bounds[name] = (float(lo), float(hi))
        elif section == "binaries":
            binaries.append(line)
    return {"objective": _parse_terms(obj_tokens), "rows": rows, "bounds": bounds,
            "binaries": binaries}


def _parse_terms(tokens: list[str]) -> dict[str, float]:
    out: dict[str, float] = {}
    i = 0
    while i < len(tokens):
        if tokens[i] in "+-":
            sign = -1.0 if tokens[i] == "-" else 1.0
            out[tokens[i + 2]] = sign * float(tokens[i + 1])
            i += 3
        else:
            i += 2
    return out

