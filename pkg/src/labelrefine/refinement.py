"""Per-label refinement pipeline.

For one label: uniformity gate (Rao), unimodality gate (circular dip),
BIC choice of a von Mises mixture, per-cluster Watson U^2, and a
control-flow check that the refined variants have different
directly-follows behaviour.  Accepted refinements rename each event to
``"<label>@[start-end]"`` after its cluster's time-of-day range.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import circstats as cs
from .eventlog import Event, EventLog, hourfloat_radians, relabel
from .mixture import ClusterAssignment, EMConfig, FitResult, assign_clusters, select_components

__all__ = [
    "ConfigError",
    "ConsistencyError",
    "ControlFlowResult",
    "LabelNotFound",
    "PipelineConfig",
    "RefinedLabel",
    "RefinementReport",
    "analyze_label",
    "apply_refinement",
    "control_flow_significance",
    "label_angles",
    "refine_iteratively",
    "refined_name",
]

logger = logging.getLogger(__name__)

REFINED = "refined"
REJECTED = "rejected"
SKIPPED = "skipped"


class ConfigError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


class LabelNotFound(KeyError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    alpha_uniformity: float = 0.01
    alpha_unimodality: float = 0.01
    alpha_watson: float = 0.01
    alpha_controlflow: float = 0.01
    k_max: int = 5
    min_events: int = 20
    restarts: int = 20
    em_tol: float = 1e-8
    em_max_iter: int = 500
    rao_replicates: int = 100_000
    dip_boot: int = 2000
    watson_gate: bool = False  # report-only by default
    watson_bootstrap: bool = False
    watson_boot: int = 500
    max_rounds: int = 5
    per_round: str = "best"  # "best": one refinement per round, "all": every accepted one
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha_uniformity", "alpha_unimodality", "alpha_watson", "alpha_controlflow"):
            a = getattr(self, name)
            if not 0.0 < a < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {a}")
        if self.k_max < 2:
            raise ConfigError(f"k_max must be >= 2, got {self.k_max}")
        if self.min_events < 4:
            raise ConfigError(f"min_events must be >= 4, got {self.min_events}")
        if self.restarts < 1 or self.em_max_iter < 1 or self.em_tol <= 0:
            raise ConfigError("restarts and em_max_iter must be >= 1 and em_tol > 0")
        if self.rao_replicates < 100 or self.dip_boot < 100 or self.watson_boot < 10:
            raise ConfigError("too few replicates for the resampling tests")
        if self.max_rounds < 1:
            raise ConfigError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.per_round not in ("best", "all"):
            raise ConfigError(f"per_round must be 'best' or 'all', got {self.per_round!r}")

    @property
    def em(self) -> EMConfig:
        return EMConfig(restarts=self.restarts, tol=self.em_tol, max_iter=self.em_max_iter, seed=self.seed)


@dataclass(frozen=True)
class ControlFlowResult:
    activity: str
    table: tuple[tuple[int, ...], tuple[int, ...]]  # (followed by activity, not followed) per variant
    method: str
    statistic: float | None
    p_value: float | None
    significant: bool
    testable: bool = True

    def to_dict(self) -> dict:
        return {
            "activity": self.activity,
            "table": [list(r) for r in self.table],
            "method": self.method,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "significant": self.significant,
            "testable": self.testable,
        }


@dataclass(frozen=True)
class RefinedLabel:
    label: str
    start: float
    end: float
    count: int


@dataclass(frozen=True)
class RefinementReport:
    label: str
    n_events: int
    decision: str
    reason: str | None = None
    rao: cs.TestResult | None = None
    dip: cs.TestResult | None = None
    fits: tuple[FitResult, ...] = ()
    chosen_k: int | None = None
    assignment: ClusterAssignment | None = field(default=None, repr=False)
    watson: tuple[cs.TestResult | None, ...] = ()
    control_flow: tuple[ControlFlowResult, ...] = ()
    refined_labels: tuple[RefinedLabel, ...] = ()
    round: int | None = None
    applied: bool = False

    @property
    def refined(self) -> bool:
        return self.decision == REFINED

    @property
    def n_significant(self) -> int:
        return sum(r.significant for r in self.control_flow)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "round": self.round,
            "applied": self.applied,
            "n_events": self.n_events,
            "decision": self.decision,
            "reason": self.reason,
            "rao": self.rao.to_dict() if self.rao else None,
            "dip": self.dip.to_dict() if self.dip else None,
            "fits": [f.to_dict() for f in self.fits],
            "chosen_k": self.chosen_k,
            "clusters": self.assignment.to_dict() if self.assignment is not None else None,
            "watson": [w.to_dict() if w else None for w in self.watson],
            "control_flow": [c.to_dict() for c in self.control_flow],
            "n_significant_activities": self.n_significant,
            "refined_labels": [
                {"label": r.label, "start": r.start, "end": r.end, "count": r.count} for r in self.refined_labels
            ],
        }


def label_angles(log: EventLog, label: str) -> tuple[list[Event], np.ndarray]:
    """Events with ``label`` (ordered by id) and their time-of-day angles."""
    events = log.events_with_label(label)
    return events, np.array([hourfloat_radians(e.timestamp)[1] for e in events])


def refined_name(label: str, start: float, end: float) -> str:
    return f"{label}@[{start:.2f}-{end:.2f}]"


# --------------------------------------------------------------------------
# control-flow significance


def _freeman_halton_2xk(yes: Sequence[int], cols: Sequence[int], max_tables: int = 2_000_000) -> float | None:
    """Exact conditional p-value for a 2 x k table with fixed margins, or
    None when the table space is too large to enumerate."""
    n_yes = sum(yes)
    log_c = [[math.lgamma(c + 1) - math.lgamma(x + 1) - math.lgamma(c - x + 1) for x in range(c + 1)] for c in cols]
    total = math.lgamma(sum(cols) + 1) - math.lgamma(n_yes + 1) - math.lgamma(sum(cols) - n_yes + 1)
    obs = sum(log_c[j][x] for j, x in enumerate(yes)) - total

    # suffix capacities bound the recursion
    cap = [0] * (len(cols) + 1)
    for j in range(len(cols) - 1, -1, -1):
        cap[j] = cap[j + 1] + cols[j]
    p = 0.0
    visited = 0

    def rec(j: int, remaining: int, acc: float):
        nonlocal p, visited
        if j == len(cols) - 1:
            visited += 1
            if visited > max_tables:
                raise OverflowError
            lp = acc + log_c[j][remaining] - total
            if lp <= obs + 1e-7:
                p += math.exp(lp)
            return
        lo = max(0, remaining - cap[j + 1])
        hi = min(cols[j], remaining)
        for x in range(lo, hi + 1):
            rec(j + 1, remaining - x, acc + log_c[j][x])

    try:
        rec(0, n_yes, 0.0)
    except OverflowError:
        return None
    return min(p, 1.0)


def _test_table(yes: list[int], no: list[int]) -> tuple[str, float | None, float]:
    table = np.array([yes, no], dtype=float)
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    if np.any(expected < 5):
        if len(yes) == 2:
            _, p = stats.fisher_exact(np.array([yes, no], dtype=int))
            return "fisher_exact", None, float(p)
        p = _freeman_halton_2xk(yes, [y + n for y, n in zip(yes, no)])
        if p is not None:
            return "freeman_halton", None, p
    chi2, p, _, _ = stats.chi2_contingency(table, correction=True)
    method = "chi2_yates" if len(yes) == 2 else "chi2"
    return method, float(chi2), float(p)


def control_flow_significance(
    log: EventLog, original: str, refined: Iterable[str], alpha: float = 0.01
) -> list[ControlFlowResult]:
    """Test, for each other activity, whether being directly followed by it
    depends on which refined variant of ``original`` occurred.

    ``log`` must already carry the refined labels.  Activities never
    directly following any variant are reported as untestable.
    """
    variants = sorted(set(refined))
    vindex = {v: i for i, v in enumerate(variants)}
    occurrences = [0] * len(variants)
    follows: dict[str, list[int]] = {}
    for trace in log.traces:
        labels = trace.labels
        for pos, lab in enumerate(labels):
            j = vindex.get(lab)
            if j is None:
                continue
            occurrences[j] += 1
            if pos + 1 < len(labels):
                follows.setdefault(labels[pos + 1], [0] * len(variants))[j] += 1

    present = [j for j, c in enumerate(occurrences) if c > 0]
    results = []
    for activity in sorted(log.alphabet - set(variants) - {original}):
        counts = follows.get(activity, [0] * len(variants))
        yes = [counts[j] for j in present]
        no = [occurrences[j] - counts[j] for j in present]
        table = (tuple(yes), tuple(no))
        if sum(yes) == 0 or len(present) < 2:
            results.append(ControlFlowResult(activity, table, "untestable", None, None, False, testable=False))
            continue
        if sum(no) == 0:
            results.append(ControlFlowResult(activity, table, "constant", None, 1.0, False))
            continue
        method, statistic, p = _test_table(yes, no)
        results.append(ControlFlowResult(activity, table, method, statistic, p, p < alpha))
    return results


# --------------------------------------------------------------------------
# applying refinements


def _cluster_names(label: str, assignment: ClusterAssignment, taken: set[str]) -> dict[int, str]:
    names: dict[int, str] = {}
    used = set(taken)
    for j, rng in enumerate(assignment.ranges):
        if rng is None:
            continue
        name = refined_name(label, *rng)
        if name in used:
            name = f"{name}#{j + 1}"
        used.add(name)
        names[j] = name
    return names


def apply_refinement(
    log: EventLog, label: str, assignment: ClusterAssignment
) -> tuple[EventLog, Callable[[Event], str]]:
    """Rename the events of ``label`` after their cluster's time range.

    ``assignment.labels`` must align with ``log.events_with_label(label)``.
    With fewer than two non-empty clusters the log is returned unchanged.
    """
    events = log.events_with_label(label)
    if len(events) != len(assignment.labels):
        raise ConsistencyError(
            f"assignment covers {len(assignment.labels)} points but {label!r} has {len(events)} events"
        )
    nonempty = sum(r is not None for r in assignment.ranges)
    if nonempty < 2:
        return log, lambda e: e.label
    names = _cluster_names(label, assignment, set(log.alphabet))
    mapping = {e.id: names[int(c)] for e, c in zip(events, assignment.labels)}
    fn = lambda e: mapping.get(e.id, e.label)  # noqa: E731
    return relabel(log, fn), fn


# --------------------------------------------------------------------------
# per-label analysis


def _fit_stage(label: str, angles: np.ndarray, config: PipelineConfig) -> RefinementReport:
    n = angles.size
    if n < config.min_events:
        return RefinementReport(label, n, SKIPPED, "insufficient-events")

    rao = cs.rao_spacing_test(angles, config.alpha_uniformity, config.rao_replicates, config.seed)
    if not rao.reject_null:
        return RefinementReport(label, n, REJECTED, "uniform", rao=rao)

    dip = cs.dip_test(angles, config.alpha_unimodality, config.dip_boot, config.seed)
    if not dip.reject_null:
        return RefinementReport(label, n, REJECTED, "unimodal", rao=rao, dip=dip)

    sel = select_components(angles, config.k_max, config.em)
    base = RefinementReport(label, n, "", rao=rao, dip=dip, fits=sel.fits, chosen_k=sel.k)
    if sel.k < 2:
        return replace(base, decision=REJECTED, reason="single-component")

    model = sel.best.model
    assignment = assign_clusters(model, angles)
    watson = []
    for j in range(model.k):
        pts = angles[assignment.labels == j]
        if pts.size < cs.WATSON_MIN_N:
            watson.append(None)
            continue
        watson.append(
            cs.watson_u2_von_mises_test(
                pts,
                model.means[j],
                model.kappas[j],
                config.alpha_watson,
                bootstrap=config.watson_bootstrap or not math.isclose(config.alpha_watson, 0.01),
                n_boot=config.watson_boot,
                seed=config.seed,
            )
        )
    base = replace(base, assignment=assignment, watson=tuple(watson))
    if sum(r is not None for r in assignment.ranges) < 2:
        return replace(base, decision=REJECTED, reason="single-component")
    if config.watson_gate and any(w is not None and w.reject_null for w in watson):
        return replace(base, decision=REJECTED, reason="watson-fail")
    return base


def _control_flow_stage(log: EventLog, stage: RefinementReport, config: PipelineConfig) -> RefinementReport:
    refined_log, _ = apply_refinement(log, stage.label, stage.assignment)
    counts = stage.assignment.counts()
    names = _cluster_names(stage.label, stage.assignment, set(log.alphabet))
    refined = tuple(
        RefinedLabel(names[j], rng[0], rng[1], counts[j])
        for j, rng in enumerate(stage.assignment.ranges)
        if rng is not None
    )
    cf = control_flow_significance(refined_log, stage.label, [r.label for r in refined], config.alpha_controlflow)
    report = replace(stage, control_flow=tuple(cf), refined_labels=refined)
    if not any(c.significant for c in cf):
        return replace(report, decision=REJECTED, reason="no-controlflow-difference")
    return replace(report, decision=REFINED, reason=None)


def analyze_label(
    log: EventLog, label: str, config: PipelineConfig = PipelineConfig(), _cache: dict | None = None
) -> RefinementReport:
    """Run every stage of the pipeline for one label.

    Gates short-circuit: a uniform or unimodal label is not fitted, and a
    single-component fit is not validated.
    """
    if label not in log.alphabet:
        raise LabelNotFound(label)
    events, angles = label_angles(log, label)
    key = (label, tuple(e.id for e in events))
    if _cache is not None and key in _cache:
        stage = _cache[key]
    else:
        stage = _fit_stage(label, angles, config)
        if _cache is not None:
            _cache[key] = stage
    if stage.decision:
        return stage
    return _control_flow_stage(log, stage, config)


def refine_iteratively(log: EventLog, config: PipelineConfig = PipelineConfig()) -> tuple[EventLog, list[RefinementReport]]:
    """Analyse every label, apply accepted refinements, and repeat on the
    relabeled log until nothing is refinable or ``config.max_rounds`` is hit.

    Accepted refinements are ranked by the number of activities with a
    significant control-flow difference (ties by label).
    """
    cache: dict = {}
    reports: list[RefinementReport] = []
    current = log
    for rnd in range(1, config.max_rounds + 1):
        round_reports = [replace(analyze_label(current, lab, config, cache), round=rnd) for lab in sorted(current.alphabet)]
        accepted = sorted((r for r in round_reports if r.refined), key=lambda r: (-r.n_significant, r.label))
        if config.per_round == "best":
            accepted = accepted[:1]
        chosen = {r.label for r in accepted}
        reports.extend(replace(r, applied=True) if r.label in chosen else r for r in round_reports)
        if not accepted:
            break
        size_before = len(current.alphabet)
        for r in accepted:
            current, _ = apply_refinement(current, r.label, r.assignment)
            logger.info("round %d: refined %r into %s", rnd, r.label, [x.label for x in r.refined_labels])
        assert len(current.alphabet) > size_before
    return current, reports
