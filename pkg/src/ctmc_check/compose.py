"""Explicit CTMC construction from a guarded-command model.

States are discovered breadth first from the initial state. A FIFO
queue processes states in index order and enumerates successors in
transition-schema order (see :func:`transition_schemas`). The builder
below expands a whole BFS level at once with numpy, then orders the
newly discovered states by (source index, schema ordinal), which yields
exactly the FIFO discovery order.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import BuildError, NumericsError, StateSpaceLimitError
from .lang import ast as A
from .lang.expr import compile_vectorized, evaluate
from .lang.parser import parse_expression
from .lang.validate import validate_model

log = logging.getLogger(__name__)

DEFAULT_MAX_STATES = 10_000_000


class AbsorbingStateError(NumericsError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    low: int
    high: int
    init: int
    module: str


@dataclass(frozen=True)
class TransitionSchema:
    """One way a global transition can fire: a single unlabeled command,
    or one combination of same-label commands across modules."""

    action: Optional[str]
    commands: tuple[tuple[int, int], ...]  # (module index, command index)
    guards: tuple[A.Expr, ...]
    rate: Fraction
    updates: tuple[A.Update, ...]


def transition_schemas(model: A.ModelAst, constants: Mapping[str, object]) -> list[TransitionSchema]:
    """Enumerate schemas in successor-enumeration order.

    Modules and their commands are walked in source order. An unlabeled
    command contributes its own schema where it appears; a label
    contributes all of its synchronized combinations at its first
    occurrence. Combinations take one command per module that uses the
    label (cartesian product, modules in source order) with the product
    of their rates; an omitted rate counts as 1.
    """
    by_label: dict[str, list[list[tuple[int, int]]]] = {}
    for mi, m in enumerate(model.modules):
        for ci, c in enumerate(m.commands):
            if c.action is None:
                continue
            per_module = by_label.setdefault(c.action, [])
            if not per_module or per_module[-1][0][0] != mi:
                per_module.append([])
            per_module[-1].append((mi, ci))

    def rate_of(cmd: A.Command) -> Fraction:
        return Fraction(1) if cmd.rate is None else Fraction(evaluate(cmd.rate, constants))

    schemas: list[TransitionSchema] = []
    emitted: set[str] = set()
    for mi, m in enumerate(model.modules):
        for ci, c in enumerate(m.commands):
            if c.action is None:
                schemas.append(TransitionSchema(None, ((mi, ci),), (c.guard,), rate_of(c), c.updates))
                continue
            if c.action in emitted:
                continue
            emitted.add(c.action)
            for combo in itertools.product(*by_label[c.action]):
                cmds = [model.modules[a].commands[b] for a, b in combo]
                rate = Fraction(1)
                for cmd in cmds:
                    rate *= rate_of(cmd)
                schemas.append(TransitionSchema(
                    c.action, tuple(combo), tuple(cmd.guard for cmd in cmds), rate,
                    tuple(u for cmd in cmds for u in cmd.updates)))
    return schemas


@dataclass(eq=False)
class Ctmc:
    """Explicit chain: states, sparse rate matrix, rewards.

    ``trans_rewards[name]`` holds the per-firing reward of each stored
    transition, aligned entry for entry with ``rates``.
    """

    variables: tuple[Variable, ...]
    states: np.ndarray
    init_index: int
    rates: sp.csr_matrix
    exit_rates: np.ndarray
    state_rewards: dict[str, np.ndarray] = field(default_factory=dict)
    trans_rewards: dict[str, sp.csr_matrix] = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    name: str = "model"

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def n_transitions(self) -> int:
        return self.rates.nnz

    @property
    def deadlocks(self) -> np.ndarray:
        return np.flatnonzero(self.exit_rates == 0)

    @property
    def columns(self) -> dict[str, int]:
        return {v.name: j for j, v in enumerate(self.variables)}

    def state(self, index: int) -> dict[str, int]:
        return {v.name: int(x) for v, x in zip(self.variables, self.states[index])}

    def sat_mask(self, expr: Union[str, A.Expr]) -> np.ndarray:
        """Boolean mask of the states satisfying ``expr``."""
        if isinstance(expr, str):
            expr = parse_expression(expr)
        fn = compile_vectorized(expr, self.constants, self.columns)
        out = fn(self.states)
        if out.dtype != bool:
            raise BuildError("state predicate does not evaluate to a boolean")
        return np.array(out, dtype=bool)

    def sat_set(self, expr: Union[str, A.Expr]) -> np.ndarray:
        """Sorted indices of the states satisfying ``expr``."""
        return np.flatnonzero(self.sat_mask(expr))

    def jump_probability(self, source: int, target: int) -> float:
        exit_rate = self.exit_rates[source]
        if exit_rate == 0:
            raise AbsorbingStateError(f"state {source} is absorbing; jump probabilities undefined")
        return float(self.rates[source, target] / exit_rate)

    def reward_rates(self, name: str) -> np.ndarray:
        """Expected reward earned per time unit in each state (state plus transition part)."""
        if name not in self.state_rewards:
            raise KeyError(name)
        out = self.state_rewards[name].copy()
        trans = self.trans_rewards.get(name)
        if trans is not None and trans.nnz:
            weighted = self.rates.copy()
            weighted.data = weighted.data * trans.data
            out += np.asarray(weighted.sum(axis=1)).ravel()
        return out

    def transition_reward_rates(self, name: str) -> np.ndarray:
        trans = self.trans_rewards.get(name)
        if trans is None or not trans.nnz:
            return np.zeros(self.n_states)
        weighted = self.rates.copy()
        weighted.data = weighted.data * trans.data
        return np.asarray(weighted.sum(axis=1)).ravel()

    def generator(self) -> sp.csr_matrix:
        """Infinitesimal generator Q = R - diag(E)."""
        return (self.rates - sp.diags(self.exit_rates)).tocsr()


def _smallest_int_dtype(variables) -> np.dtype:
    lo = min((v.low for v in variables), default=0)
    hi = max((v.high for v in variables), default=0)
    for dt in (np.int8, np.int16, np.int32):
        info = np.iinfo(dt)
        if info.min <= lo and hi <= info.max:
            return np.dtype(dt)
    return np.dtype(np.int64)


def _variables(model: A.ModelAst, constants) -> tuple[Variable, ...]:
    out = []
    for m in model.modules:
        for v in m.variables:
            low, high = int(evaluate(v.low, constants)), int(evaluate(v.high, constants))
            init = low if v.init is None else int(evaluate(v.init, constants))
            out.append(Variable(v.name, low, high, init, m.name))
    return tuple(out)


def build_state_space(model: A.ModelAst, constants: Optional[Mapping[str, object]] = None,
                      max_states: int = DEFAULT_MAX_STATES, name: str = "model") -> Ctmc:
    """Explore the reachable state space of ``model`` and build its CTMC.

    ``constants`` supplies values for constants left undefined in the
    source (or overrides defined ones).
    """
    env = validate_model(model, constants, require_all=True)
    variables = _variables(model, env)
    columns = {v.name: j for j, v in enumerate(variables)}
    schemas = transition_schemas(model, env)
    dtype = _smallest_int_dtype(variables)

    sizes = np.array([v.high - v.low + 1 for v in variables], dtype=object)
    if np.prod(sizes, dtype=object) >= 2**62:
        raise BuildError("variable ranges too large for state encoding")
    strides = np.ones(len(variables), dtype=np.int64)
    for j in range(len(variables) - 2, -1, -1):
        strides[j] = strides[j + 1] * int(sizes[j + 1])
    lows = np.array([v.low for v in variables], dtype=np.int64)
    highs = np.array([v.high for v in variables], dtype=np.int64)

    def encode(rows: np.ndarray) -> np.ndarray:
        return (rows.astype(np.int64) - lows) @ strides

    compiled = []
    for s in schemas:
        guards = [compile_vectorized(g, env, columns) for g in s.guards]
        updates = [(columns[u.var], compile_vectorized(u.value, env, columns)) for u in s.updates]
        compiled.append((guards, updates, float(s.rate)))

    trans_items: dict[str, list] = {}
    for block in model.rewards:
        items = []
        for t in block.trans_items:
            items.append((t.action, compile_vectorized(t.guard, env, columns),
                          compile_vectorized(t.value, env, columns)))
        trans_items[block.name] = items

    init_row = np.array([[v.init for v in variables]], dtype=dtype)
    state_blocks = [init_row]
    known_codes = encode(init_row)
    known_index = np.zeros(1, dtype=np.int64)
    n_known = 1
    frontier = init_row
    level_start = 0

    edge_src, edge_dst, edge_rate = [], [], []
    edge_reward: dict[str, list] = {name_: [] for name_ in trans_items}

    while frontier.shape[0]:
        f_codes = encode(frontier)
        parts_pos, parts_schema, parts_rows, parts_rate = [], [], [], []
        parts_reward: dict[str, list] = {name_: [] for name_ in trans_items}
        for j, (guards, updates, rate) in enumerate(compiled):
            mask = np.ones(frontier.shape[0], dtype=bool)
            for g in guards:
                mask &= g(frontier)
            pos = np.flatnonzero(mask)
            if not pos.size:
                continue
            src_rows = frontier[pos]
            rows = src_rows.copy()
            for col, fn in updates:
                values = np.asarray(fn(src_rows), dtype=np.int64)
                bad = (values < lows[col]) | (values > highs[col])
                if bad.any():
                    k = int(np.flatnonzero(bad)[0])
                    raise BuildError(
                        f"update sets {variables[col].name}={values[k]} outside "
                        f"{lows[col]}..{highs[col]} from state index {level_start + pos[k]}")
                rows[:, col] = values
            keep = encode(rows) != f_codes[pos]
            if not keep.any():
                continue
            pos, rows, src_rows = pos[keep], rows[keep], src_rows[keep]
            parts_pos.append(pos)
            parts_schema.append(np.full(pos.size, j, dtype=np.int64))
            parts_rows.append(rows)
            parts_rate.append(np.full(pos.size, rate))
            action = schemas[j].action
            for rname, items in trans_items.items():
                acc = np.zeros(pos.size)
                for item_action, guard_fn, value_fn in items:
                    if item_action != action:
                        continue
                    hit = np.asarray(guard_fn(src_rows), dtype=bool)
                    if hit.any():
                        acc += np.where(hit, np.asarray(value_fn(src_rows), dtype=float), 0.0)
                parts_reward[rname].append(acc)

        if not parts_pos:
            break
        pos = np.concatenate(parts_pos)
        order = np.lexsort((np.concatenate(parts_schema), pos))
        pos = pos[order]
        rows = np.concatenate(parts_rows)[order]
        rate = np.concatenate(parts_rate)[order]
        codes = encode(rows)

        slot = np.searchsorted(known_codes, codes)
        slot = np.minimum(slot, known_codes.size - 1)
        found = known_codes[slot] == codes
        target = np.empty(codes.size, dtype=np.int64)
        target[found] = known_index[slot[found]]

        new_sel = np.flatnonzero(~found)
        if new_sel.size:
            uniq, first = np.unique(codes[new_sel], return_index=True)
            discovery = np.argsort(first, kind="stable")
            new_index = np.empty(uniq.size, dtype=np.int64)
            new_index[discovery] = n_known + np.arange(uniq.size)
            target[new_sel] = new_index[np.searchsorted(uniq, codes[new_sel])]
            new_rows = rows[new_sel[first[discovery]]]
            n_known += uniq.size
            if n_known > max_states:
                raise StateSpaceLimitError(n_known, max_states)
            merged_codes = np.concatenate([known_codes, uniq])
            merged_index = np.concatenate([known_index, new_index])
            srt = np.argsort(merged_codes, kind="stable")
            known_codes, known_index = merged_codes[srt], merged_index[srt]
            state_blocks.append(new_rows)
            frontier_next = new_rows
        else:
            frontier_next = frontier[:0]

        edge_src.append(level_start + pos)
        edge_dst.append(target)
        edge_rate.append(rate)
        for rname in trans_items:
            edge_reward[rname].append(np.concatenate(parts_reward[rname])[order])

        level_start += frontier.shape[0]
        frontier = frontier_next

    states = np.concatenate(state_blocks)
    n = states.shape[0]
    if edge_src:
        src = np.concatenate(edge_src)
        dst = np.concatenate(edge_dst)
        rate = np.concatenate(edge_rate)
    else:
        src = dst = np.zeros(0, dtype=np.int64)
        rate = np.zeros(0)
    rates, merge = _merge_parallel(src, dst, rate, n)

    trans_rewards = {}
    for rname in trans_items:
        if edge_reward[rname]:
            weighted = np.add.reduceat(np.concatenate(edge_reward[rname])[merge[0]] * rate[merge[0]],
                                       merge[1]) if rate.size else np.zeros(0)
        else:
            weighted = np.zeros(rates.nnz)
        per_firing = rates.copy()
        per_firing.data = weighted / rates.data if rates.nnz else weighted
        trans_rewards[rname] = per_firing

    state_rewards = {}
    for block in model.rewards:
        vec = np.zeros(n)
        for item in block.state_items:
            hit = np.asarray(compile_vectorized(item.guard, env, columns)(states), dtype=bool)
            value = np.asarray(compile_vectorized(item.value, env, columns)(states), dtype=float)
            vec += np.where(hit, value, 0.0)
        if (vec < 0).any() or not np.isfinite(vec).all():
            raise BuildError(f"reward structure {block.name!r} yields negative or non-finite values")
        state_rewards[block.name] = vec
    for rname, matrix in trans_rewards.items():
        if (matrix.data < 0).any():
            raise BuildError(f"reward structure {rname!r} yields negative transition rewards")

    exit_rates = np.asarray(rates.sum(axis=1)).ravel()
    ctmc = Ctmc(variables, states, 0, rates, exit_rates, state_rewards, trans_rewards, dict(env), name)
    if ctmc.deadlocks.size:
        log.info("%s: %d deadlock states kept as absorbing", name, ctmc.deadlocks.size)
    return ctmc


def _merge_parallel(src, dst, rate, n):
    """Sum parallel edges into a CSR matrix; returns (matrix, (order, starts))."""
    order = np.lexsort((dst, src))
    s, d, r = src[order], dst[order], rate[order]
    if s.size:
        boundary = np.ones(s.size, dtype=bool)
        boundary[1:] = (s[1:] != s[:-1]) | (d[1:] != d[:-1])
        starts = np.flatnonzero(boundary)
        data = np.add.reduceat(r, starts)
        rows, cols = s[starts], d[starts]
    else:
        starts = np.zeros(0, dtype=np.int64)
        data, rows, cols = r, s, d
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    idx_dtype = np.int32 if n < 2**31 and data.size < 2**31 else np.int64
    matrix = sp.csr_matrix((data, cols.astype(idx_dtype), indptr.astype(idx_dtype)), shape=(n, n))
    return matrix, (order, starts)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def export_tra(ctmc: Ctmc, path) -> None:
    """``.tra``: header ``<states> <transitions>``, then ``src dst rate`` rows."""
    coo = ctmc.rates.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{ctmc.n_states} {ctmc.n_transitions}\n")
        for i, j, r in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {r:.17g}\n")


def export_sta(ctmc: Ctmc, path) -> None:
    """``.sta``: header ``(var1,...,varN)``, then ``index:(v1,...,vN)`` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("(" + ",".join(v.name for v in ctmc.variables) + ")\n")
        for i, row in enumerate(ctmc.states.tolist()):
            fh.write(f"{i}:(" + ",".join(map(str, row)) + ")\n")


def export_lab(ctmc: Ctmc, path, labels: Optional[Mapping[str, np.ndarray]] = None) -> None:
    """``.lab``: header ``0="init" 1="deadlock" ...``, then ``index: label ids`` rows."""
    names = ["init", "deadlock"] + list(labels or {})
    masks = [np.zeros(ctmc.n_states, dtype=bool), np.zeros(ctmc.n_states, dtype=bool)]
    masks[0][ctmc.init_index] = True
    masks[1][ctmc.deadlocks] = True
    masks.extend(np.asarray(m, dtype=bool) for m in (labels or {}).values())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(f'{k}="{nm}"' for k, nm in enumerate(names)) + "\n")
        stacked = np.vstack(masks)
        for i in np.flatnonzero(stacked.any(axis=0)):
            ids = " ".join(str(k) for k in np.flatnonzero(stacked[:, i]))
            fh.write(f"{i}: {ids}\n")


def export_chain(ctmc: Ctmc, stem) -> list[Path]:
    stem = Path(stem)
    paths = [stem.with_suffix(".tra"), stem.with_suffix(".sta"), stem.with_suffix(".lab")]
    export_tra(ctmc, paths[0])
    export_sta(ctmc, paths[1])
    export_lab(ctmc, paths[2])
    return paths
