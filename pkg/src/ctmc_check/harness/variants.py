"""Reaction index and knockout variants of a model."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Union

from ..errors import ExperimentError
from ..lang import ast as A

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommandRef:
    module: str
    position: int  # index among the module's commands
    action: Optional[str]


@dataclass
class ReactionIndex:
    """Reaction id -> commands implementing it, from ``//@reaction`` annotations.

    A labeled command that is not annotated inherits the id of its
    annotated synchronization partners; unannotated unlabeled commands
    belong to no reaction.
    """

    model: A.ModelAst
    commands: dict[str, list[CommandRef]] = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: A.ModelAst) -> "ReactionIndex":
        index = cls(model)
        label_ids: dict[str, set[str]] = {}
        for m in model.modules:
            for i, c in enumerate(m.commands):
                if c.reaction is not None:
                    index.commands.setdefault(c.reaction, []).append(CommandRef(m.name, i, c.action))
                    if c.action is not None:
                        label_ids.setdefault(c.action, set()).add(c.reaction)
        for label, ids in label_ids.items():
            if len(ids) > 1:
                raise ExperimentError(
                    f"action {label!r} is shared by reactions {sorted(ids, key=_id_key)}; "
                    "a synchronized reaction must carry a single id")
        for m in model.modules:
            for i, c in enumerate(m.commands):
                if c.reaction is None and c.action in label_ids:
                    (rid,) = label_ids[c.action]
                    index.commands[rid].append(CommandRef(m.name, i, c.action))
        index.commands = dict(sorted(index.commands.items(), key=lambda kv: _id_key(kv[0])))
        return index

    @property
    def ids(self) -> list[str]:
        return list(self.commands)

    def __len__(self) -> int:
        return len(self.commands)

    def __contains__(self, rid) -> bool:
        return str(rid) in self.commands

    def labels(self, rid: str) -> set[str]:
        return {ref.action for ref in self.commands[str(rid)] if ref.action is not None}

    def name(self, rid: str) -> str:
        """Readable name such as ``PIP3-GabSOS`` or ``PDGFR:0->2``.

        Synchronized reactions list the molecules left unchanged (the
        actors) before the ones whose status changes; boolean inputs read
        by a guard come first.
        """
        refs = self.commands[str(rid)]
        bool_consts = {c.name for c in self.model.constants if c.type == "bool"}
        parts: list[str] = []
        commands = [(ref, self.model.module(ref.module).commands[ref.position]) for ref in refs]
        commands.sort(key=lambda rc: _changes(rc[1], rc[0].module))
        for ref, cmd in commands:
            for name in sorted(A.identifiers(cmd.guard) & bool_consts):
                if name not in parts:
                    parts.append(name)
            if ref.module not in parts:
                parts.append(ref.module)
        if len(parts) == 1 and len(commands) == 1:
            cmd = commands[0][1]
            for u in cmd.updates:
                low = _guard_value(cmd.guard, u.var)
                if low is not None and isinstance(u.value, A.Num):
                    return f"{u.var}:{low}->{u.value.value}"
        return "-".join(parts)


def _id_key(rid: str):
    return (0, int(rid), "") if rid.isdigit() else (1, 0, rid)


def _changes(cmd: A.Command, var: str) -> bool:
    before = _guard_value(cmd.guard, var)
    for u in cmd.updates:
        if u.var == var:
            return not (isinstance(u.value, A.Num) and u.value.value == before)
    return False


def _guard_value(guard: A.Expr, var: str):
    if isinstance(guard, A.Binary):
        if guard.op == "=" and isinstance(guard.left, A.Ident) and guard.left.name == var \
                and isinstance(guard.right, A.Num):
            return guard.right.value
        if guard.op == "&":
            left = _guard_value(guard.left, var)
            return left if left is not None else _guard_value(guard.right, var)
    return None


@dataclass(frozen=True)
class RemoveReaction:
    reaction: str

    def __str__(self) -> str:
        return f"reaction {self.reaction}"


@dataclass(frozen=True)
class RemoveLabel:
    label: str

    def __str__(self) -> str:
        return f"label {self.label}"


Edit = Union[RemoveReaction, RemoveLabel]

_LABEL_EDIT = re.compile(r"^label:(.+)$")


def parse_edit(text: Union[str, int]) -> Edit:
    """``7`` or ``reaction:7`` removes a reaction; ``label:bk5`` removes an action."""
    text = str(text).strip()
    m = _LABEL_EDIT.match(text)
    if m:
        return RemoveLabel(m.group(1))
    return RemoveReaction(text.removeprefix("reaction:"))


def make_variant(model: A.ModelAst, edits: Iterable[Union[Edit, str, int]],
                 index: Optional[ReactionIndex] = None) -> A.ModelAst:
    """Delete every command of the named reactions or labels.

    Removing a labeled command also removes all commands sharing its
    label in every module, so a synchronized reaction disappears as a
    whole.
    """
    edits = [e if isinstance(e, (RemoveReaction, RemoveLabel)) else parse_edit(e) for e in edits]
    if not edits:
        return model
    index = index or ReactionIndex.from_model(model)
    doomed: set[tuple[str, int]] = set()
    labels: set[str] = set()
    known_labels = set(model.actions)
    for edit in edits:
        if isinstance(edit, RemoveReaction):
            if edit.reaction not in index:
                raise ExperimentError(f"unknown reaction id {edit.reaction!r}")
            for ref in index.commands[edit.reaction]:
                doomed.add((ref.module, ref.position))
                if ref.action is not None:
                    labels.add(ref.action)
        else:
            if edit.label not in known_labels:
                raise ExperimentError(f"unknown action label {edit.label!r}")
            labels.add(edit.label)
    modules = []
    for m in model.modules:
        kept = tuple(c for i, c in enumerate(m.commands)
                     if (m.name, i) not in doomed and c.action not in labels)
        if not kept and m.commands:
            log.warning("module %s has no commands left in the variant", m.name)
        modules.append(replace(m, commands=kept))
    return replace(model, modules=tuple(modules))


def dangling_labels(original: A.ModelAst, variant: A.ModelAst) -> set[str]:
    """Labels present in some but not all of the modules that originally shared them."""
    def users(model):
        out: dict[str, set[str]] = {}
        for m in model.modules:
            for c in m.commands:
                if c.action is not None:
                    out.setdefault(c.action, set()).add(m.name)
        return out

    before, after = users(original), users(variant)
    return {label for label, mods in after.items() if mods != before.get(label, set())}
