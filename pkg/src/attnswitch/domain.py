"""Kit-fulfillment planning domain.

A worker's station has a storage area holding containers, a single unloading
platform, and a kit box. Each human action either moves one container between
storage and the platform or moves one item from the platform container into
the kit. The kit is done when the required item counts are placed and the
platform is empty again.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import CapacityError, ContractViolation, InstanceError, ParseError

DEFAULT_STATE_CAP = 1_000_000

FETCH = "fetch"
STOW = "stow"
PLACE = "place"
_KIND_ORDER = {FETCH: 0, STOW: 1, PLACE: 2}


@dataclass(frozen=True, order=True)
class HumanAction:
    kind: str
    target: str

    def __post_init__(self):
        if self.kind not in _KIND_ORDER:
            raise ValueError(f"unknown action kind {self.kind!r}")

    @classmethod
    def fetch(cls, container: str) -> HumanAction:
        return cls(FETCH, container)

    @classmethod
    def stow(cls, container: str) -> HumanAction:
        return cls(STOW, container)

    @classmethod
    def place(cls, item: str) -> HumanAction:
        return cls(PLACE, item)

    def __str__(self) -> str:
        return f"{self.kind.capitalize()}({self.target})"


@dataclass(frozen=True)
class Container:
    id: str
    contents: Mapping[str, int]


@dataclass(frozen=True)
class KitInstance:
    """A validated instance. Containers and items are kept in sorted order."""

    containers: tuple[Container, ...]
    requirement: Mapping[str, int]
    notes: str = ""

    @cached_property
    def container_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.containers)

    @cached_property
    def items(self) -> tuple[str, ...]:
        return tuple(sorted(self.requirement))

    @cached_property
    def required(self) -> tuple[int, ...]:
        return tuple(self.requirement[i] for i in self.items)

    @cached_property
    def source(self) -> dict[str, str]:
        """Map each required item type to the unique container holding it."""
        out = {}
        for item in self.items:
            for c in self.containers:
                if c.contents.get(item, 0) > 0:
                    out[item] = c.id
        return out

    @cached_property
    def actions(self) -> tuple[HumanAction, ...]:
        """Every human action that can ever be legal, in canonical order."""
        acts = [HumanAction.fetch(c) for c in self.container_ids]
        acts += [HumanAction.stow(c) for c in self.container_ids]
        acts += [HumanAction.place(i) for i in self.items]
        return tuple(acts)

    @cached_property
    def action_index(self) -> dict[HumanAction, int]:
        return {a: k for k, a in enumerate(self.actions)}

    def initial_state(self) -> KitState:
        return KitState(None, tuple(0 for _ in self.items))

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "containers": [{"id": c.id, "contents": dict(c.contents)} for c in self.containers],
            "requirement": dict(self.requirement),
        }
        if self.notes:
            doc["notes"] = self.notes
        return doc

    def content_hash(self) -> str:
        doc = self.to_document()
        doc.pop("notes", None)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True, order=True)
class KitState:
    """Platform occupant (``None`` when empty) and per-item placed counts.

    ``placed`` is aligned with ``KitInstance.items``.
    """

    platform: str | None
    placed: tuple[int, ...]

    def placed_dict(self, inst: KitInstance) -> dict[str, int]:
        return dict(zip(inst.items, self.placed))

    def __str__(self) -> str:
        return f"({self.platform or 'Empty'}, {list(self.placed)})"


# -- parsing -----------------------------------------------------------------


def _expect_count(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{path}: expected an integer count, got {value!r}")
    if value < 0:
        raise InstanceError(f"{path}: counts must be non-negative, got {value}")
    return value


def _expect_counts(obj: Any, path: str) -> dict[str, int]:
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: expected an object mapping item type to count")
    return {str(k): _expect_count(v, f"{path}.{k}") for k, v in obj.items()}


def instance_from_document(doc: Any) -> KitInstance:
    if not isinstance(doc, dict):
        raise ParseError("$: expected a JSON object")
    for key in ("containers", "requirement"):
        if key not in doc:
            raise ParseError(f"$.{key}: missing required field")
    unknown = set(doc) - {"containers", "requirement", "notes"}
    if unknown:
        raise ParseError(f"$: unknown fields {sorted(unknown)}")
    raw = doc["containers"]
    if not isinstance(raw, list):
        raise ParseError("$.containers: expected a list")

    containers = []
    for n, entry in enumerate(raw):
        path = f"$.containers[{n}]"
        if not isinstance(entry, dict) or "id" not in entry or "contents" not in entry:
            raise ParseError(f"{path}: expected an object with 'id' and 'contents'")
        if not isinstance(entry["id"], str) or not entry["id"]:
            raise ParseError(f"{path}.id: expected a non-empty string")
        containers.append(Container(entry["id"], _expect_counts(entry["contents"], f"{path}.contents")))
    requirement = _expect_counts(doc["requirement"], "$.requirement")
    notes = doc.get("notes", "")
    if not isinstance(notes, str):
        raise ParseError("$.notes: expected a string")

    if not containers:
        raise InstanceError("at least one container is required")
    ids = [c.id for c in containers]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise InstanceError(f"container ids must be unique; duplicated: {dupes}")
    for item, need in sorted(requirement.items()):
        holders = [c for c in containers if c.contents.get(item, 0) > 0]
        if need == 0:
            continue
        if not holders:
            raise InstanceError(f"required item {item!r} is not held by any container")
        if len(holders) > 1:
            raise InstanceError(
                f"required item {item!r} is held by several containers "
                f"{[c.id for c in holders]}; each item type must have a single source"
            )
        if holders[0].contents[item] < need:
            raise InstanceError(
                f"required item {item!r}: need {need} but container {holders[0].id!r} "
                f"holds only {holders[0].contents[item]}"
            )
    containers.sort(key=lambda c: c.id)
    return KitInstance(tuple(containers), requirement, notes)


def parse_instance(text: str) -> KitInstance:
    """Parse and validate a JSON instance document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return instance_from_document(doc)


def load_instance(path: str | Path) -> KitInstance:
    return parse_instance(Path(path).read_text())


def dump_instance(inst: KitInstance) -> str:
    return json.dumps(inst.to_document(), indent=2)


CANONICAL_DOCUMENT = (
    '{"containers": [{"id": "C1", "contents": {"bolt": 2, "nut": 2}}, '
    '{"id": "C2", "contents": {"washer": 2, "gear": 2}}], '
    '"requirement": {"bolt": 2, "nut": 1, "washer": 2, "gear": 1}}'
)


def canonical_instance() -> KitInstance:
    """The two-container instance whose optimal plan takes 10 human actions."""
    return parse_instance(CANONICAL_DOCUMENT)


# -- dynamics ----------------------------------------------------------------


def _check_state(inst: KitInstance, x: KitState) -> None:
    if x.platform is not None and x.platform not in inst.container_ids:
        raise ContractViolation(f"unknown container on platform: {x.platform!r}")
    if len(x.placed) != len(inst.items) or any(
        not 0 <= p <= r for p, r in zip(x.placed, inst.required)
    ):
        raise ContractViolation(f"placed counts {x.placed} out of range for requirement {inst.required}")


def is_terminal(inst: KitInstance, x: KitState) -> bool:
    return x.platform is None and x.placed == inst.required


def legal_actions(inst: KitInstance, x: KitState) -> tuple[HumanAction, ...]:
    """Legal actions in canonical order (fetches, stows, places)."""
    _check_state(inst, x)
    if is_terminal(inst, x):
        return ()
    if x.platform is None:
        return tuple(HumanAction.fetch(c) for c in inst.container_ids)
    acts = [HumanAction.stow(x.platform)]
    for k, item in enumerate(inst.items):
        if inst.source.get(item) == x.platform and x.placed[k] < inst.required[k]:
            acts.append(HumanAction.place(item))
    return tuple(acts)


def transition(inst: KitInstance, x: KitState, a: HumanAction) -> KitState:
    if a not in legal_actions(inst, x):
        raise ContractViolation(f"{a} is not legal in state {x}")
    if a.kind == FETCH:
        return KitState(a.target, x.placed)
    if a.kind == STOW:
        return KitState(None, x.placed)
    k = inst.items.index(a.target)
    placed = list(x.placed)
    placed[k] += 1
    return KitState(x.platform, tuple(placed))


def _sort_key(inst: KitInstance, x: KitState) -> tuple:
    rank = -1 if x.platform is None else inst.container_ids.index(x.platform)
    return (rank, x.placed)


def enumerate_states(inst: KitInstance, cap: int = DEFAULT_STATE_CAP) -> list[KitState]:
    """All states reachable from the initial state, sorted canonically."""
    start = inst.initial_state()
    seen = {start}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for a in legal_actions(inst, x):
            y = transition(inst, x, a)
            if y not in seen:
                seen.add(y)
                if len(seen) > cap:
                    raise CapacityError(f"more than {cap} reachable states")
                queue.append(y)
    return sorted(seen, key=lambda x: _sort_key(inst, x))


@dataclass(frozen=True)
class StateSpace:
    """Dense index over reachable states with a successor table.

    ``succ[s, a]`` is the successor index of state ``s`` under global action
    ``a`` (see ``KitInstance.actions``), or -1 when ``a`` is illegal.
    """

    inst: KitInstance
    states: tuple[KitState, ...]
    succ: np.ndarray
    terminal: np.ndarray
    index: dict[KitState, int] = field(repr=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.inst.actions)

    @property
    def initial(self) -> int:
        return self.index[self.inst.initial_state()]

    def legal(self, s: int) -> np.ndarray:
        """Global ids of the legal actions at ``s``, canonical order."""
        return np.flatnonzero(self.succ[s] >= 0)

    def action_id(self, a: HumanAction) -> int:
        return self.inst.action_index[a]


def build_state_space(inst: KitInstance, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    states = enumerate_states(inst, cap)
    index = {x: n for n, x in enumerate(states)}
    succ = np.full((len(states), len(inst.actions)), -1, dtype=np.int64)
    for n, x in enumerate(states):
        for a in legal_actions(inst, x):
            succ[n, inst.action_index[a]] = index[transition(inst, x, a)]
    terminal = np.array([is_terminal(inst, x) for x in states])
    succ.setflags(write=False)
    terminal.setflags(write=False)
    return StateSpace(inst, tuple(states), succ, terminal, index)
