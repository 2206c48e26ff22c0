"""Per-family flow LP: its construction, its scaling and LP-format export.

Columns come in four blocks, each ordered set-major (family node order)
then by arc or node ascending:

    f(a, s)   flow of set s on arc a
    yh(i, s)  set s starts sharing at node i
    yb(i, s)  set s stops sharing at node i
    w(i, p)   partition p splits at node i

Rows are flow conservation per (set, node), the split links between w and
the end/start of parent and child sets, and one "split exactly once" row per
partition. The root start and the sink fixings are column bounds, counted
separately as fixings.
"""

import logging
import re
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from steiner_laminar.graph import BidirectedView, Instance, bidirect, commodity_sinks
from steiner_laminar.laminar import LaminarFamily
from steiner_laminar.utils import format_cost

logger = logging.getLogger(__name__)

FLOW, START, END, SPLIT = "f", "yh", "yb", "w"

# LP format allows at most 510 characters per line
_MAX_LINE = 250


class FormulationError(Exception):
    """Exception raised for invalid LP models or model/family mismatches."""

    pass


class VariableKey(NamedTuple):
    """Column key: kind plus (arc or node, set node or partition) indices."""

    kind: str
    first: int
    second: int

    @property
    def name(self) -> str:
        return f"{self.kind}_{self.second}_{self.first}"


class ModelSize(NamedTuple):
    variables: int
    constraints: int
    fixings: int


@dataclass(frozen=True, eq=False)
class LpModel:
    """Sparse equality-form LP: minimize cost @ x s.t. matrix @ x = rhs, lower <= x <= upper.

    `constraints` counts rows plus fixed columns, the way the closed-form
    size counts them.
    """

    column_names: tuple[str, ...]
    cost: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    row_names: tuple[str, ...]
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n: int = 0
    m: int = 0
    b: int = 0
    root: int = -1
    family_id: int = -1
    family_code: str = ""
    set_count: int = 0
    partition_count: int = 0
    scale: float = 1.0

    @property
    def num_variables(self) -> int:
        return len(self.column_names)

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    @property
    def num_fixings(self) -> int:
        return int(np.count_nonzero(self.lower == self.upper))

    @property
    def num_constraints(self) -> int:
        return self.num_rows + self.num_fixings

    @property
    def size(self) -> ModelSize:
        return ModelSize(self.num_variables, self.num_constraints, self.num_fixings)

    def column(self, key: VariableKey) -> int:
        """Column index of a variable key (bijection with the block layout).

        Raises:
            FormulationError: If the key is outside the model.
        """
        n, m, sets = self.n, self.m, self.set_count
        if key.kind == FLOW and 0 <= key.first < m and 0 <= key.second < sets:
            return key.second * m + key.first
        offset = sets * m
        if key.kind == START and 0 <= key.first < n and 0 <= key.second < sets:
            return offset + key.second * n + key.first
        offset += sets * n
        if key.kind == END and 0 <= key.first < n and 0 <= key.second < sets:
            return offset + key.second * n + key.first
        offset += sets * n
        if key.kind == SPLIT and 0 <= key.first < n and 0 <= key.second < self.partition_count:
            return offset + key.second * n + key.first
        raise FormulationError(f"Variable {key} is not in the model")

    def objective(self, x: np.ndarray) -> float:
        return float(self.cost @ x)


def closed_form_size(n: int, m: int, b: int) -> ModelSize:
    """Model size for a full binary family: n nodes, m arcs, b commodities."""
    sets, parts = 2 * b - 1, b - 1
    variables = m * sets + 2 * n * sets + n * parts
    fixings = n + n * b
    rows = n * sets + n * parts + 2 * n * parts + parts
    return ModelSize(variables, rows + fixings, fixings)


def build_lp(
    g: Instance,
    root: int,
    family: LaminarFamily,
    view: BidirectedView | None = None,
) -> LpModel:
    """Build the flow LP for instance g rooted at `root` and laminar family `family`.

    Args:
        g: The instance.
        root: 0-based root node; must be a terminal.
        family: Family over K = R minus root (any arity).
        view: Optional precomputed bidirected view of g.

    Returns:
        The model with fixings encoded as equal lower/upper bounds.

    Raises:
        FormulationError: If the family's commodity count does not match K.
    """
    sinks = commodity_sinks(g, root)
    if family.b != len(sinks):
        raise FormulationError(
            f"Family over {family.b} commodities does not match |K|={len(sinks)}"
        )
    view = view or bidirect(g)
    n, m = g.node_count, view.arc_count
    sets = len(family.nodes)
    parts = family.partitions
    num_cols = sets * m + 2 * sets * n + len(parts) * n

    def col_f(a: int, s: int) -> int:
        return s * m + a

    def col_start(i: int, s: int) -> int:
        return sets * m + s * n + i

    def col_end(i: int, s: int) -> int:
        return sets * m + sets * n + s * n + i

    def col_split(i: int, p: int) -> int:
        return sets * m + 2 * sets * n + p * n + i

    names: list[str] = [""] * num_cols
    for s in range(sets):
        for a in range(m):
            names[col_f(a, s)] = VariableKey(FLOW, a, s).name
        for i in range(n):
            names[col_start(i, s)] = VariableKey(START, i, s).name
            names[col_end(i, s)] = VariableKey(END, i, s).name
    for p in range(len(parts)):
        for i in range(n):
            names[col_split(i, p)] = VariableKey(SPLIT, i, p).name

    cost = np.zeros(num_cols)
    for s in range(sets):
        cost[s * m:(s + 1) * m] = view.costs
    lower = np.zeros(num_cols)
    upper = np.ones(num_cols)

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    row_names: list[str] = []
    rhs: list[float] = []

    def add_row(name: str, terms: list[tuple[int, float]], value: float) -> None:
        r = len(row_names)
        for c, coef in terms:
            rows.append(r)
            cols.append(c)
            vals.append(coef)
        row_names.append(name)
        rhs.append(value)

    # flow conservation: out - in - start + end = 0
    for s in range(sets):
        for i in range(n):
            terms = [(col_f(a, s), 1.0) for a in view.out_arcs[i]]
            terms += [(col_f(a, s), -1.0) for a in view.in_arcs[i]]
            terms += [(col_start(i, s), -1.0), (col_end(i, s), 1.0)]
            add_row(f"flow_{s}_{i}", terms, 0.0)
    # a split set stops sharing where its partition happens
    for p, (parent, _) in enumerate(parts):
        for i in range(n):
            add_row(f"stop_{p}_{i}", [(col_split(i, p), 1.0), (col_end(i, parent), -1.0)], 0.0)
    # the child sets start sharing there
    for p, (_, children) in enumerate(parts):
        for child in children:
            for i in range(n):
                add_row(
                    f"begin_{p}_{child}_{i}",
                    [(col_split(i, p), 1.0), (col_start(i, child), -1.0)],
                    0.0,
                )
    # every partition happens at exactly one node
    for p in range(len(parts)):
        add_row(f"once_{p}", [(col_split(i, p), 1.0) for i in range(n)], 1.0)

    # root start and sink end fixings
    for i in range(n):
        value = 1.0 if i == root else 0.0
        lower[col_start(i, 0)] = upper[col_start(i, 0)] = value
    for s, node in enumerate(family.nodes):
        if not node.is_leaf:
            continue
        sink = sinks[node.mask.bit_length() - 1]
        for i in range(n):
            value = 1.0 if i == sink else 0.0
            lower[col_end(i, s)] = upper[col_end(i, s)] = value

    matrix = sp.csr_matrix(
        (np.asarray(vals), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(row_names), num_cols),
    )
    model = LpModel(
        column_names=tuple(names),
        cost=cost,
        lower=lower,
        upper=upper,
        row_names=tuple(row_names),
        matrix=matrix,
        rhs=np.asarray(rhs, dtype=np.float64),
        n=n,
        m=m,
        b=family.b,
        root=root,
        family_id=family.family_id,
        family_code=family.expression(),
        set_count=sets,
        partition_count=len(parts),
    )
    logger.debug(
        "Built LP for family %d %s: %d columns, %d rows, %d fixings",
        family.family_id,
        model.family_code,
        model.num_variables,
        model.num_rows,
        model.num_fixings,
    )
    return model


def scale_rhs(model: LpModel, lam: float) -> LpModel:
    """Return a copy scaled by lam: every right-hand side, upper bound and fixing of 1 becomes lam.

    Raises:
        FormulationError: If lam is not in (0, 1].
    """
    if not 0 < lam <= 1:
        raise FormulationError(f"Scale must be in (0, 1], got {lam}")
    ratio = lam / model.scale
    return replace(
        model,
        lower=model.lower * ratio,
        upper=model.upper * ratio,
        rhs=model.rhs * ratio,
        scale=lam,
    )


def row_residuals(model: LpModel, x: np.ndarray) -> tuple[float, float]:
    """Return (max row residual, max bound violation) of a point."""
    residual = model.matrix @ x - model.rhs
    row = float(np.max(np.abs(residual))) if len(residual) else 0.0
    below = np.max(model.lower - x, initial=0.0)
    above = np.max(x - model.upper, initial=0.0)
    return row, float(max(below, above))


def _format_term(coef: float, name: str, first: bool) -> str:
    sign = "-" if coef < 0 else ("" if first else "+")
    magnitude = abs(coef)
    if magnitude == 1:
        body = name
    else:
        body = f"{format_cost(magnitude)} {name}"
    return f"{sign} {body}" if sign else body


def _wrap_terms(head: str, terms: list[str]) -> list[str]:
    lines: list[str] = []
    current = head
    for term in terms:
        if len(current) + len(term) + 1 > _MAX_LINE:
            lines.append(current)
            current = "   "
        current += " " + term
    lines.append(current)
    return lines


def export_lp(model: LpModel) -> str:
    """Render the model in LP text format (Minimize / Subject To / Bounds / End).

    Variable names encode kind and indices; integer coefficients are written
    without a decimal point; rows keep the model order so output is byte-stable.
    """
    lines = [
        f"\\ Steiner flow LP family {model.family_id} {model.family_code} root {model.root + 1}",
        "Minimize",
    ]
    objective = [
        _format_term(float(model.cost[c]), model.column_names[c], first=index == 0)
        for index, c in enumerate(np.flatnonzero(model.cost))
    ]
    if not objective:
        objective = [f"0 {model.column_names[0]}"] if model.column_names else []
    lines.extend(_wrap_terms(" obj:", objective))

    lines.append("Subject To")
    matrix = model.matrix.tocsr()
    for r, row_name in enumerate(model.row_names):
        start, stop = matrix.indptr[r], matrix.indptr[r + 1]
        terms = [
            _format_term(float(coef), model.column_names[c], first=k == 0)
            for k, (c, coef) in enumerate(zip(matrix.indices[start:stop], matrix.data[start:stop]))
        ]
        body = _wrap_terms(f" {row_name}:", terms)
        body[-1] += f" = {format_cost(float(model.rhs[r]))}"
        lines.extend(body)

    lines.append("Bounds")
    for c, name in enumerate(model.column_names):
        lo, hi = float(model.lower[c]), float(model.upper[c])
        if lo == hi:
            lines.append(f" {name} = {format_cost(lo)}")
        else:
            lines.append(f" {format_cost(lo)} <= {name} <= {format_cost(hi)}")
    lines.append("End")
    return "\n".join(lines) + "\n"


_TERM_RE = re.compile(r"([+-]?)\s*(\d[\d.eE+-]*)?\s*([A-Za-z_][\w.]*)")


def read_lp(text: str) -> LpModel:
    """Read back the LP-format subset written by export_lp.

    Only the structure is recovered: columns, objective, equality rows and
    bounds. Layout metadata (n, m, b, root) is not part of the format.

    Raises:
        FormulationError: On sections or rows this reader does not understand.
    """
    section = None
    objective_terms: list[tuple[str, float]] = []
    rows: list[tuple[str, list[tuple[str, float]], float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    pending: list[str] = []
    order: dict[str, int] = {}

    def note(name: str) -> None:
        if name not in order:
            order[name] = len(order)

    def parse_terms(expr: str) -> list[tuple[str, float]]:
        terms = []
        for sign, coef, name in _TERM_RE.findall(expr):
            value = float(coef) if coef else 1.0
            terms.append((name, -value if sign == "-" else value))
            note(name)
        return terms

    def flush_row() -> None:
        if not pending:
            return
        text_row = " ".join(pending)
        pending.clear()
        if section == "objective":
            objective_terms.extend(parse_terms(text_row.split(":", 1)[1]))
            return
        if ":" not in text_row or "=" not in text_row:
            raise FormulationError(f"Cannot read row {text_row!r}")
        name, body = text_row.split(":", 1)
        lhs, value = body.rsplit("=", 1)
        if lhs.rstrip().endswith(("<", ">")):
            raise FormulationError(f"Only equality rows are supported: {name.strip()}")
        rows.append((name.strip(), parse_terms(lhs), float(value)))

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        lowered = line.lower()
        if lowered in ("minimize", "subject to", "bounds", "end"):
            flush_row()
            section = {"minimize": "objective", "subject to": "rows"}.get(lowered, lowered)
            continue
        if section in ("objective", "rows"):
            if ":" in line and pending:
                flush_row()
            pending.append(line)
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 3 and parts[1] == "=":
                value = float(parts[2])
                bounds[parts[0]] = (value, value)
                note(parts[0])
            elif len(parts) == 5 and parts[1] == parts[3] == "<=":
                bounds[parts[2]] = (float(parts[0]), float(parts[4]))
                note(parts[2])
            else:
                raise FormulationError(f"Cannot read bound {line!r}")
        else:
            raise FormulationError(f"Unexpected line outside sections: {line!r}")
    flush_row()

    names = tuple(sorted(order, key=order.__getitem__))
    index = {name: i for i, name in enumerate(names)}
    cost = np.zeros(len(names))
    for name, value in objective_terms:
        cost[index[name]] += value
    lower = np.zeros(len(names))
    upper = np.full(len(names), np.inf)
    for name, (lo, hi) in bounds.items():
        lower[index[name]], upper[index[name]] = lo, hi
    r_idx, c_idx, vals = [], [], []
    for r, (_, terms, _) in enumerate(rows):
        for name, value in terms:
            r_idx.append(r)
            c_idx.append(index[name])
            vals.append(value)
    matrix = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(len(rows), len(names)))
    return LpModel(
        column_names=names,
        cost=cost,
        lower=lower,
        upper=upper,
        row_names=tuple(name for name, _, _ in rows),
        matrix=matrix,
        rhs=np.asarray([value for _, _, value in rows], dtype=np.float64),
    )
