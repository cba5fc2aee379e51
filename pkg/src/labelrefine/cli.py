"""Command line front end.

    labelrefine analyze  --log LOG.csv [--report analysis.json]
    labelrefine refine   --log LOG.csv --out refined.csv [--iterative --max-rounds N]
    labelrefine export   (--net NET | --log LOG.csv) [--dot | --dfg] [--out FILE]
    labelrefine test-net --net NET (--word A,B,C | --language MAXLEN)
    labelrefine replay   MANIFEST.json

Exit codes: 0 success, 1 word rejected (test-net), 2 unreadable or invalid
input, 64 invalid configuration.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .eventlog import CsvSchema, EventLogError, EventLog, read_csv_log, write_csv
from .process_model import NetFormatError, SearchBudgetExceeded, accepts, discover_dfg, export_dot, language, parse_net
from .refinement import ConfigError, PipelineConfig, analyze_label, refine_iteratively

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_INPUT = 2
EXIT_CONFIG = 64

logger = logging.getLogger("labelrefine")


class InputError(Exception):
    pass


def _schema_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("CSV schema")
    d = CsvSchema()
    g.add_argument("--timestamp-col", default=d.timestamp)
    g.add_argument("--sensor-col", default=d.sensor)
    g.add_argument("--value-col", default=d.value, help="empty string: no value column")
    g.add_argument("--address-col", default=d.address, help="empty string: no address column")
    g.add_argument("--time-format", default=d.timestamp_format, help="strptime format (default: %(default)s)")
    g.add_argument("--delimiter", default=d.delimiter)


def _config_args(p: argparse.ArgumentParser) -> None:
    d = PipelineConfig()
    g = p.add_argument_group("pipeline")
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--alpha", type=float, help="set all four significance levels")
    g.add_argument("--alpha-uniformity", type=float)
    g.add_argument("--alpha-unimodality", type=float)
    g.add_argument("--alpha-watson", type=float)
    g.add_argument("--alpha-controlflow", type=float)
    g.add_argument("--k-max", type=int, default=d.k_max)
    g.add_argument("--min-events", type=int, default=d.min_events)
    g.add_argument("--restarts", type=int, default=d.restarts)
    g.add_argument("--rao-replicates", type=int, default=d.rao_replicates)
    g.add_argument("--dip-boot", type=int, default=d.dip_boot)
    g.add_argument("--watson-gate", action="store_true", help="reject refinements whose clusters fail Watson U2")
    g.add_argument("--watson-bootstrap", action="store_true", help="parametric-bootstrap Watson critical values")
    g.add_argument("--per-round", choices=("best", "all"), default=d.per_round)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelrefine", description="Time-based label refinement for sensor event logs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="analyse every label and write a JSON report")
    p.add_argument("--log", required=True)
    p.add_argument("--report", default="analysis.json")
    p.add_argument("--manifest", help="manifest path (default: REPORT with .manifest.json)")
    _schema_args(p)
    _config_args(p)

    p = sub.add_parser("refine", help="apply accepted refinements and write the refined log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", default="refined.csv")
    p.add_argument("--report", default="refinement.json")
    p.add_argument("--manifest")
    p.add_argument("--iterative", action="store_true", help="repeat rounds until nothing is refinable")
    p.add_argument("--max-rounds", type=int, default=PipelineConfig().max_rounds)
    _schema_args(p)
    _config_args(p)

    p = sub.add_parser("export", help="write a DOT rendering of a Petri net or a log's directly-follows graph")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--net")
    src.add_argument("--log")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--dot", action="store_true", help="DOT output (default)")
    fmt.add_argument("--dfg", action="store_true", help="discover a directly-follows graph from --log")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--manifest")
    _schema_args(p)

    p = sub.add_parser("test-net", help="check words against, or enumerate the language of, a Petri net")
    p.add_argument("--net", required=True)
    q = p.add_mutually_exclusive_group(required=True)
    q.add_argument("--word", help="comma separated labels; empty string for the empty word")
    q.add_argument("--language", type=int, metavar="MAXLEN")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def _schema(ns) -> CsvSchema:
    return CsvSchema(
        timestamp=ns.timestamp_col,
        sensor=ns.sensor_col,
        value=ns.value_col or None,
        address=ns.address_col or None,
        timestamp_format=ns.time_format,
        delimiter=ns.delimiter,
    )


def _config(ns, **extra) -> PipelineConfig:
    alphas = {}
    for name in ("uniformity", "unimodality", "watson", "controlflow"):
        v = getattr(ns, f"alpha_{name}")
        if v is None:
            v = ns.alpha
        if v is not None:
            alphas[f"alpha_{name}"] = v
    return PipelineConfig(
        seed=ns.seed,
        k_max=ns.k_max,
        min_events=ns.min_events,
        restarts=ns.restarts,
        rao_replicates=ns.rao_replicates,
        dip_boot=ns.dip_boot,
        watson_gate=ns.watson_gate,
        watson_bootstrap=ns.watson_bootstrap,
        per_round=ns.per_round,
        **alphas,
        **extra,
    )


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _load_log(path: str, schema: CsvSchema) -> EventLog:
    try:
        log = read_csv_log(_read_text(path), schema)
    except EventLogError as exc:
        raise InputError(f"{path}: {exc}") from None
    if log.n_events == 0:
        raise InputError(f"{path}: no events")
    return log


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return _clean(obj.item())
    return obj


def _dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def _sha256(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(path: str, ns, argv: list[str], inputs: list[str], outputs: dict, config, started: str) -> None:
    doc = {
        "tool": "labelrefine",
        "version": __version__,
        "command": ns.command,
        "argv": argv,
        "cwd": os.getcwd(),
        "inputs": {p: _sha256(p) for p in inputs},
        "config": dataclasses.asdict(config) if config is not None else None,
        "seed": getattr(ns, "seed", None),
        "outputs": outputs,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    Path(path).write_text(_dumps(doc), encoding="utf-8")


def _manifest_path(ns, primary: str) -> str:
    if ns.manifest:
        return ns.manifest
    base = primary[:-5] if primary.endswith(".json") else primary
    return base + ".manifest.json"


def _summary(reports) -> str:
    rows = [("label", "round", "n", "decision", "reason", "k", "sig")]
    for r in reports:
        rows.append(
            (
                r.label,
                "" if r.round is None else str(r.round),
                str(r.n_events),
                r.decision,
                r.reason or "",
                "" if r.chosen_k is None else str(r.chosen_k),
                str(r.n_significant) if r.control_flow else "",
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)


def _report_doc(command: str, log: EventLog, config: PipelineConfig, reports, extra=None) -> dict:
    doc = {
        "tool": "labelrefine",
        "version": __version__,
        "command": command,
        "config": dataclasses.asdict(config),
        "n_events": log.n_events,
        "n_traces": len(log),
        "reports": [r.to_dict() for r in reports],
    }
    doc.update(extra or {})
    return doc


def cmd_analyze(ns, argv) -> int:
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    config = _config(ns)
    log = _load_log(ns.log, _schema(ns))
    reports = [analyze_label(log, lab, config) for lab in sorted(log.alphabet)]
    Path(ns.report).write_text(_dumps(_report_doc("analyze", log, config, reports)), encoding="utf-8")
    print(_summary(reports))
    _write_manifest(_manifest_path(ns, ns.report), ns, argv, [ns.log], {"report": ns.report}, config, started)
    return EXIT_OK


def cmd_refine(ns, argv) -> int:
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    config = _config(ns, max_rounds=ns.max_rounds if ns.iterative else 1)
    schema = _schema(ns)
    log = _load_log(ns.log, schema)
    refined, reports = refine_iteratively(log, config)
    applied = [
        {"round": r.round, "label": r.label, "into": [x.label for x in r.refined_labels]}
        for r in reports
        if r.applied
    ]
    doc = _report_doc(
        "refine", log, config, reports, {"applied": applied, "alphabet": sorted(refined.alphabet)}
    )
    buf = io.StringIO()
    write_csv(refined, buf, schema)
    Path(ns.out).write_text(buf.getvalue(), encoding="utf-8")
    Path(ns.report).write_text(_dumps(doc), encoding="utf-8")
    print(_summary(reports))
    for a in applied:
        print(f"round {a['round']}: {a['label']} -> {', '.join(a['into'])}")
    outputs = {"refined_log": ns.out, "report": ns.report}
    _write_manifest(_manifest_path(ns, ns.report), ns, argv, [ns.log], outputs, config, started)
    return EXIT_OK


def cmd_export(ns, argv) -> int:
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    if ns.net:
        if ns.dfg:
            raise ConfigError("--dfg needs --log")
        try:
            model = parse_net(_read_text(ns.net), name=Path(ns.net).stem)
        except NetFormatError as exc:
            raise InputError(f"{ns.net}: {exc}") from None
        src = ns.net
    else:
        model = discover_dfg(_load_log(ns.log, _schema(ns)))
        src = ns.log
    text = export_dot(model)
    if ns.out:
        Path(ns.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if ns.out or ns.manifest:
        _write_manifest(_manifest_path(ns, ns.out or "export"), ns, argv, [src], {"dot": ns.out}, None, started)
    return EXIT_OK


def cmd_test_net(ns, argv) -> int:
    try:
        net = parse_net(_read_text(ns.net), name=Path(ns.net).stem)
    except NetFormatError as exc:
        raise InputError(f"{ns.net}: {exc}") from None
    if ns.language is not None:
        if ns.language < 0:
            raise ConfigError("--language must be >= 0")
        res = language(net, ns.language)
        for w in sorted(res.words, key=lambda w: (len(w), w)):
            print("<" + ",".join(w) + ">")
        if not res.complete:
            print("warning: search budget exhausted, language is partial", file=sys.stderr)
        return EXIT_OK
    word = [w.strip() for w in ns.word.split(",")] if ns.word else []
    try:
        ok = accepts(net, word)
    except SearchBudgetExceeded as exc:
        print(f"indeterminate: {exc}")
        return EXIT_INPUT
    print("accepted" if ok else "rejected")
    return EXIT_OK if ok else EXIT_REJECTED


def cmd_replay(ns, argv) -> int:
    try:
        doc = json.loads(_read_text(ns.manifest))
        recorded, cwd = doc["argv"], doc["cwd"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{ns.manifest}: not a run manifest ({exc})") from None
    if recorded and recorded[0] == "replay":
        raise InputError("refusing to replay a replay")
    with _chdir(cwd):
        return main(recorded)


@contextlib.contextmanager
def _chdir(path):
    old = os.getcwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(old)


COMMANDS = {
    "analyze": cmd_analyze,
    "refine": cmd_refine,
    "export": cmd_export,
    "test-net": cmd_test_net,
    "replay": cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[ns.command](ns, argv)
    except ConfigError as exc:
        print(f"labelrefine: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"labelrefine: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
