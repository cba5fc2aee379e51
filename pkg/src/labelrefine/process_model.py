"""Accepting Petri nets, their accepted languages, directly-follows graphs
and Graphviz DOT export.

Net description format (one statement per line, ``#`` starts a comment,
tokens split shell-style so labels may be quoted)::

    place p1 p2 p3
    transition t1 A
    transition t7 tau          # tau (or no label) = invisible
    arc p1 t1
    arc t1 p2
    initial p1                 # repeat a place, or write p1:2, for more tokens
    final p3                   # one line per final marking
"""

from __future__ import annotations

import shlex
from collections import Counter, deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, NamedTuple

from .eventlog import EventLog

__all__ = [
    "MAX_MARKINGS",
    "MAX_TOKENS_PER_PLACE",
    "AcceptingPetriNet",
    "DirectlyFollowsGraph",
    "FiringError",
    "LanguageResult",
    "Marking",
    "NetFormatError",
    "SearchBudgetExceeded",
    "accepts",
    "discover_dfg",
    "enabled",
    "export_dot",
    "fire",
    "format_net",
    "language",
    "parse_net",
    "prefix_closure",
]

MAX_MARKINGS = 100_000
MAX_TOKENS_PER_PLACE = 16
TAU = "tau"


class FiringError(ValueError):
    pass


class NetFormatError(ValueError):
    pass


class SearchBudgetExceeded(RuntimeError):
    """The bounded state-space search could not decide the question."""


class Marking(Mapping[str, int]):
    """Immutable multiset of places; missing places hold 0 tokens."""

    __slots__ = ("_tokens", "_hash")

    def __init__(self, tokens: Mapping[str, int] | Iterable[str] = ()):
        counts = Counter(tokens) if not isinstance(tokens, Mapping) else dict(tokens)
        if any(c < 0 for c in counts.values()):
            raise ValueError("token counts must be non-negative")
        self._tokens = {p: c for p, c in sorted(counts.items()) if c > 0}
        self._hash = hash(tuple(self._tokens.items()))

    def __getitem__(self, place: str) -> int:
        return self._tokens.get(place, 0)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tokens)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, place) -> bool:
        return place in self._tokens

    def __eq__(self, other) -> bool:
        if isinstance(other, Marking):
            return self._tokens == other._tokens
        return NotImplemented

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        parts = [p if c == 1 else f"{p}:{c}" for p, c in self._tokens.items()]
        return "[" + ", ".join(parts) + "]"

    @property
    def total(self) -> int:
        return sum(self._tokens.values())


@dataclass(frozen=True)
class AcceptingPetriNet:
    """Labeled Petri net with an initial marking and a set of final markings.

    ``transitions`` maps transition names to labels; ``None`` marks an
    invisible (tau) transition.
    """

    places: frozenset[str]
    transitions: Mapping[str, str | None]
    arcs: frozenset[tuple[str, str]]
    initial: Marking
    finals: tuple[Marking, ...]
    name: str = field(default="net", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "places", frozenset(self.places))
        object.__setattr__(self, "transitions", dict(self.transitions))
        object.__setattr__(self, "arcs", frozenset(self.arcs))
        object.__setattr__(self, "finals", tuple(self.finals))
        overlap = self.places & set(self.transitions)
        if overlap:
            raise NetFormatError(f"names used as both place and transition: {sorted(overlap)}")
        for src, dst in self.arcs:
            ok = (src in self.places and dst in self.transitions) or (src in self.transitions and dst in self.places)
            if not ok:
                raise NetFormatError(f"arc {src} -> {dst} must connect a place and a transition")
        for m in (self.initial, *self.finals):
            unknown = set(m) - self.places
            if unknown:
                raise NetFormatError(f"marking refers to unknown places {sorted(unknown)}")

    @cached_property
    def preset(self) -> dict[str, frozenset[str]]:
        pre: dict[str, set[str]] = {t: set() for t in self.transitions}
        for src, dst in self.arcs:
            if dst in pre:
                pre[dst].add(src)
        return {t: frozenset(ps) for t, ps in pre.items()}

    @cached_property
    def postset(self) -> dict[str, frozenset[str]]:
        post: dict[str, set[str]] = {t: set() for t in self.transitions}
        for src, dst in self.arcs:
            if src in post:
                post[src].add(dst)
        return {t: frozenset(ps) for t, ps in post.items()}

    @cached_property
    def _final_set(self) -> frozenset[Marking]:
        return frozenset(self.finals)

    def is_final(self, marking: Marking) -> bool:
        return marking in self._final_set

    def label(self, t: str) -> str | None:
        return self.transitions[t]


def enabled(net: AcceptingPetriNet, marking: Marking) -> frozenset[str]:
    return frozenset(t for t, pre in net.preset.items() if all(marking[p] >= 1 for p in pre))


def fire(net: AcceptingPetriNet, marking: Marking, t: str) -> Marking:
    if t not in net.transitions:
        raise FiringError(f"unknown transition {t!r}")
    pre, post = net.preset[t], net.postset[t]
    if any(marking[p] < 1 for p in pre):
        raise FiringError(f"transition {t!r} is not enabled in {marking!r}")
    tokens = dict(marking)
    for p in pre:
        tokens[p] -= 1
    for p in post:
        tokens[p] = tokens.get(p, 0) + 1
    return Marking(tokens)


def _successors(net: AcceptingPetriNet, marking: Marking):
    for t in sorted(enabled(net, marking)):
        yield t, net.transitions[t], fire(net, marking, t)


def _over_bound(m: Marking) -> bool:
    return any(c > MAX_TOKENS_PER_PLACE for c in m.values())


def accepts(net: AcceptingPetriNet, word: Iterable[str]) -> bool:
    """Whether some firing sequence from the initial marking reaches a final
    marking while spelling ``word`` (tau transitions skipped).

    Raises SearchBudgetExceeded when the bounded search ends without an
    answer because states were cut off.
    """
    word = tuple(word)
    start = (net.initial, 0)
    seen = {start}
    markings = {net.initial}
    queue = deque([start])
    truncated = False
    while queue:
        m, pos = queue.popleft()
        if pos == len(word) and net.is_final(m):
            return True
        for _, lab, m2 in _successors(net, m):
            if lab is None:
                nxt = (m2, pos)
            elif pos < len(word) and lab == word[pos]:
                nxt = (m2, pos + 1)
            else:
                continue
            if nxt in seen:
                continue
            if _over_bound(m2) or (m2 not in markings and len(markings) >= MAX_MARKINGS):
                truncated = True
                continue
            seen.add(nxt)
            markings.add(m2)
            queue.append(nxt)
    if truncated:
        raise SearchBudgetExceeded(f"search budget exhausted deciding {word!r}")
    return False


class LanguageResult(NamedTuple):
    words: frozenset[tuple[str, ...]]
    complete: bool


def language(net: AcceptingPetriNet, max_len: int) -> LanguageResult:
    """All accepted visible words of length <= ``max_len``.

    ``complete`` is False when the search budget cut off part of the state
    space, in which case ``words`` is a subset of the true answer.
    """
    start = (net.initial, ())
    seen = {start}
    markings = {net.initial}
    queue = deque([start])
    words: set[tuple[str, ...]] = set()
    complete = True
    while queue:
        m, w = queue.popleft()
        if net.is_final(m):
            words.add(w)
        for _, lab, m2 in _successors(net, m):
            if lab is None:
                nxt = (m2, w)
            elif len(w) < max_len:
                nxt = (m2, w + (lab,))
            else:
                continue
            if nxt in seen:
                continue
            if _over_bound(m2) or (m2 not in markings and len(markings) >= MAX_MARKINGS):
                complete = False
                continue
            seen.add(nxt)
            markings.add(m2)
            queue.append(nxt)
    return LanguageResult(frozenset(words), complete)


def prefix_closure(words: Iterable[Iterable[str]]) -> set[tuple[str, ...]]:
    out: set[tuple[str, ...]] = set()
    for w in words:
        w = tuple(w)
        out.update(w[:i] for i in range(len(w) + 1))
    return out


# --------------------------------------------------------------------------
# net description files


def _parse_marking(tokens: list[str], lineno: int) -> Marking:
    counts: Counter[str] = Counter()
    for tok in tokens:
        place, _, mult = tok.partition(":")
        try:
            counts[place] += int(mult) if mult else 1
        except ValueError:
            raise NetFormatError(f"line {lineno}: bad token count in {tok!r}") from None
    return Marking(counts)


def parse_net(text: str, name: str = "net") -> AcceptingPetriNet:
    places: set[str] = set()
    transitions: dict[str, str | None] = {}
    arcs: set[tuple[str, str]] = set()
    initial = None
    finals: list[Marking] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            toks = shlex.split(line, comments=True)
        except ValueError as exc:
            raise NetFormatError(f"line {lineno}: {exc}") from None
        if not toks:
            continue
        kw, args = toks[0].lower(), toks[1:]
        if kw in ("place", "places"):
            places.update(args)
        elif kw == "transition":
            if len(args) not in (1, 2):
                raise NetFormatError(f"line {lineno}: expected 'transition NAME [LABEL]'")
            label = args[1] if len(args) == 2 else None
            transitions[args[0]] = None if label in (None, TAU) else label
        elif kw == "arc":
            if len(args) != 2:
                raise NetFormatError(f"line {lineno}: expected 'arc SOURCE TARGET'")
            arcs.add((args[0], args[1]))
        elif kw == "initial":
            if initial is not None:
                raise NetFormatError(f"line {lineno}: initial marking given twice")
            initial = _parse_marking(args, lineno)
        elif kw == "final":
            finals.append(_parse_marking(args, lineno))
        else:
            raise NetFormatError(f"line {lineno}: unknown statement {toks[0]!r}")
    if initial is None:
        raise NetFormatError("missing 'initial' marking")
    if not finals:
        raise NetFormatError("missing 'final' marking")
    return AcceptingPetriNet(frozenset(places), transitions, frozenset(arcs), initial, tuple(finals), name)


def _marking_tokens(m: Marking) -> str:
    return " ".join(p if c == 1 else f"{p}:{c}" for p, c in m.items())


def format_net(net: AcceptingPetriNet) -> str:
    lines = ["place " + " ".join(sorted(net.places))]
    for t in sorted(net.transitions):
        lab = net.transitions[t]
        lines.append(f"transition {t} {TAU if lab is None else shlex.quote(lab)}")
    lines += [f"arc {s} {d}" for s, d in sorted(net.arcs)]
    lines.append(("initial " + _marking_tokens(net.initial)).rstrip())
    lines += [("final " + _marking_tokens(m)).rstrip() for m in net.finals]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# directly-follows graphs


@dataclass(frozen=True)
class DirectlyFollowsGraph:
    nodes: Mapping[str, int]
    edges: Mapping[tuple[str, str], int]
    start: Mapping[str, int]
    end: Mapping[str, int]

    def to_dict(self) -> dict:
        return {
            "nodes": dict(self.nodes),
            "edges": [[a, b, w] for (a, b), w in sorted(self.edges.items())],
            "start": dict(self.start),
            "end": dict(self.end),
        }


def discover_dfg(log: EventLog) -> DirectlyFollowsGraph:
    nodes: Counter[str] = Counter()
    edges: Counter[tuple[str, str]] = Counter()
    start: Counter[str] = Counter()
    end: Counter[str] = Counter()
    for trace in log.traces:
        labels = trace.labels
        if not labels:
            continue
        nodes.update(labels)
        edges.update(zip(labels, labels[1:]))
        start[labels[0]] += 1
        end[labels[-1]] += 1
    return DirectlyFollowsGraph(dict(nodes), dict(edges), dict(start), dict(end))


# --------------------------------------------------------------------------
# DOT export


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _petri_dot(net: AcceptingPetriNet) -> str:
    final_places = {p for m in net.finals for p in m}
    out = [f"digraph {_q(net.name)} {{", "  rankdir=LR;", '  node [fontname="Helvetica"];']
    for p in sorted(net.places):
        tokens = net.initial[p]
        label = "●" * tokens if tokens <= 3 else str(tokens)
        extra = ", peripheries=2" if p in final_places else ""
        out.append(f"  {_q(p)} [shape=circle, label={_q(label)}, xlabel={_q(p)}{extra}];")
    for t in sorted(net.transitions):
        lab = net.transitions[t]
        if lab is None:
            out.append(
                f"  {_q(t)} [shape=box, label=\"\", xlabel={_q(t)}, style=filled, fillcolor=lightgray, width=0.15];"
            )
        else:
            out.append(f"  {_q(t)} [shape=box, label={_q(lab)}, xlabel={_q(t)}];")
    for src, dst in sorted(net.arcs):
        out.append(f"  {_q(src)} -> {_q(dst)};")
    out.append("}")
    return "\n".join(out) + "\n"


def _dfg_dot(dfg: DirectlyFollowsGraph) -> str:
    out = ['digraph "dfg" {', "  rankdir=LR;"]
    if dfg.nodes:
        out.append('  node [shape=box, fontname="Helvetica"];')
        out.append('  "__start__" [shape=circle, label="", style=filled, fillcolor=palegreen, width=0.3];')
        out.append('  "__end__" [shape=doublecircle, label="", style=filled, fillcolor=salmon, width=0.25];')
    for a in sorted(dfg.nodes):
        out.append(f"  {_q(a)} [label={_q(f'{a} ({dfg.nodes[a]})')}];")
    for a in sorted(dfg.start):
        out.append(f'  "__start__" -> {_q(a)} [label="{dfg.start[a]}", style=dashed];')
    for (a, b) in sorted(dfg.edges):
        out.append(f'  {_q(a)} -> {_q(b)} [label="{dfg.edges[(a, b)]}"];')
    for a in sorted(dfg.end):
        out.append(f'  {_q(a)} -> "__end__" [label="{dfg.end[a]}", style=dashed];')
    out.append("}")
    return "\n".join(out) + "\n"


def export_dot(model: AcceptingPetriNet | DirectlyFollowsGraph) -> str:
    if isinstance(model, AcceptingPetriNet):
        return _petri_dot(model)
    if isinstance(model, DirectlyFollowsGraph):
        return _dfg_dot(model)
    raise TypeError(f"cannot export {type(model).__name__} to DOT")
