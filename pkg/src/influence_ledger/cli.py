"""Command-line interface.

    influence-ledger <decompose|exchange|geometry|attribute|rankdiff|curl>
        --items F --model F [--model2 F] --pairs F --out DIR [flags]

Exit codes: 0 success, 1 unexpected failure, 2 configuration or input error,
3 degenerate data (empty informative support, ties under the error policy,
uninformative pairs), 4 exchange-geometry error, 5 attribution error,
6 edge-field error (e.g. disconnected pair graph).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .core import (
    ItemTable,
    LinearModel,
    ModelState,
    build_pair_distribution,
    load_json,
    model_from_config,
)
from .errors import InfluenceLedgerError, InvalidInputError
from .fields import PairGraph, curl_table, factor_fields, hodge_decompose, score_representability
from .geometry import ActiveFactorContext, geometry_report
from .ledger import influence_exchange, influence_report, ledger_rows
from .order import flip_scan, interpolate_states
from .paths import curvature_report, nonlinear_global
from .quadrature import DEFAULT_NODES
from .reports import meta, write_csv, write_json

log = logging.getLogger("influence_ledger")

# curl_table.csv keeps at most this many triangles (the largest curls first)
CURL_TABLE_ROWS = 100_000

COMMANDS = ("decompose", "exchange", "geometry", "attribute", "rankdiff", "curl")

DEFAULTS: dict[str, Any] = {
    "items": None,
    "model": None,
    "model2": None,
    "pairs": None,
    "out": None,
    "tol": 1e-9,
    "quad_nodes": DEFAULT_NODES,
    "tie_policy": "exclude",
    "semantics": None,
    "grid": 64,
    "curvature_grid": 5,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="influence-ledger", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run config; its keys override flags")
        s.add_argument("--items", help="item CSV: item_id,<factor_1>,...")
        s.add_argument("--model", help="model config JSON")
        s.add_argument("--model2", help="second model state (exchange, geometry, rankdiff)")
        s.add_argument("--pairs", help="pair spec JSON")
        s.add_argument("--out", help="output directory")
        s.add_argument("--tol", type=float, help="rigidity tolerance (default 1e-9)")
        s.add_argument("--quad-nodes", dest="quad_nodes", type=int,
                       help=f"Gauss-Legendre nodes per segment (default {DEFAULT_NODES})")
        s.add_argument("--tie-policy", dest="tie_policy", choices=("exclude", "error"))
        s.add_argument("--semantics", help="pig | axis | axis:<order> | linear")
        s.add_argument("--grid", type=int, help="flip-scan grid size (rankdiff)")
        s.add_argument("--curvature-grid", dest="curvature_grid", type=int)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, overridden by flags, overridden by the config file."""
    cfg = dict(DEFAULTS)
    cfg.update({k: v for k, v in vars(args).items() if k in DEFAULTS and v is not None})
    if args.config:
        file_cfg = load_json(args.config)
        if not isinstance(file_cfg, dict):
            raise InvalidInputError("run config must be a JSON object")
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise InvalidInputError(f"unknown run config keys: {sorted(unknown)}")
        base = Path(args.config).parent
        for key, value in file_cfg.items():
            if key in ("items", "model", "model2", "pairs", "out") and value is not None:
                value = str(base / value)
            cfg[key] = value
    for key in ("items", "model", "pairs", "out"):
        if not cfg[key]:
            raise InvalidInputError(f"missing required setting --{key}")
    if cfg["tie_policy"] not in ("exclude", "error"):
        raise InvalidInputError("tie policy must be 'exclude' or 'error'")
    if int(cfg["quad_nodes"]) < 2:
        raise InvalidInputError("--quad-nodes must be >= 2")
    return cfg


class Run:
    """Inputs shared by every command, loaded once."""

    def __init__(self, command: str, cfg: dict[str, Any]):
        self.command = command
        self.cfg = cfg
        self.items = ItemTable.from_csv(cfg["items"])
        self.model = model_from_config(load_json(cfg["model"]))
        self.state = ModelState(Path(cfg["model"]).stem, self.model)
        self.state2 = None
        if cfg["model2"]:
            self.state2 = ModelState(Path(cfg["model2"]).stem,
                                     model_from_config(load_json(cfg["model2"])))
            if self.state2.label == self.state.label:
                self.state2 = ModelState(self.state2.label + "'", self.state2.model)
        for st in filter(None, (self.state, self.state2)):
            if st.model.dim != self.items.d:
                raise InvalidInputError(
                    f"model {st.label} has {st.model.dim} factors, items have {self.items.d}")
        self.pair_spec = load_json(cfg["pairs"])
        self.dist = build_pair_distribution(self.pair_spec, self.items, self.model,
                                            cfg["tie_policy"])
        self.out = Path(cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.nodes = int(cfg["quad_nodes"])

    def semantics(self, default: str = "pig") -> str:
        sem = self.cfg["semantics"]
        if sem is None:
            return "linear" if isinstance(self.model, LinearModel) else default
        return sem

    def need_second(self) -> ModelState:
        if self.state2 is None:
            raise InvalidInputError(f"{self.command} needs two model states (--model2)")
        return self.state2

    def need_linear(self) -> None:
        for st in filter(None, (self.state, self.state2)):
            if not isinstance(st.model, LinearModel):
                raise InvalidInputError(f"{self.command} needs linear models")

    def emit(self, payload: dict, semantics: str) -> Path:
        report = {"meta": meta(self.command, semantics, self.dist.digest(), __version__),
                  **payload}
        path = self.out / f"{self.command}.json"
        write_json(path, report)
        return path


def cmd_decompose(run: Run) -> None:
    run.need_linear()
    header, rows = ledger_rows(run.state, run.items, run.dist)
    write_csv(run.out / "ledger.csv", header, rows)
    run.emit(influence_report(run.state, run.items, run.dist).to_json(), "linear")


def cmd_exchange(run: Run) -> None:
    second = run.need_second()
    sem = run.semantics()
    if sem == "linear":
        run.need_linear()
        payload = influence_exchange(run.state, second, run.items, run.dist).to_json()
    else:
        before = nonlinear_global(run.state, run.items, run.dist, sem, run.nodes).influence
        after = nonlinear_global(second, run.items, run.dist, sem, run.nodes).influence
        payload = {"state": [run.state.label, second.label], "I": after.tolist(),
                   "I_before": before.tolist(), "exchange": (after - before).tolist(),
                   "pairs_evaluated": len(run.dist)}
    run.emit(payload, sem)


def cmd_geometry(run: Run) -> None:
    run.need_linear()
    ctx = ActiveFactorContext.from_linear(run.state, run.items, run.dist)
    u = ctx.log_weights(run.model.w)
    u2 = None if run.state2 is None else ctx.log_weights(run.state2.model.w)
    report = geometry_report(ctx, u, u2, tol=float(run.cfg["tol"]), nodes=run.nodes)
    report["states"] = [s.label for s in filter(None, (run.state, run.state2))]
    run.emit(report, "linear")


def cmd_attribute(run: Run) -> None:
    sem = run.semantics()
    result = nonlinear_global(run.state, run.items, run.dist, sem, run.nodes)
    feats = run.items.features
    curv = curvature_report(run.model, (feats.min(axis=0), feats.max(axis=0)),
                            int(run.cfg["curvature_grid"]))
    payload = result.to_json()
    payload["curvature"] = curv.to_json()
    run.emit(payload, sem)


def cmd_rankdiff(run: Run) -> None:
    second = run.need_second()
    path = interpolate_states(run.model, second.model)
    report = flip_scan(path, run.items, int(run.cfg["grid"]))
    run.emit(report.to_json(), "parameter-interpolation")


def cmd_curl(run: Run) -> None:
    sem = run.semantics()
    graph = PairGraph.from_pairs(run.items.n, zip(run.dist.i, run.dist.j))
    fields = factor_fields(sem, run.model, run.items, graph, run.nodes)
    table = curl_table(fields, graph)
    factors = []
    for f, fld in enumerate(fields):
        entry = hodge_decompose(fld).to_json()
        rep = score_representability(fld)
        if not rep.representable:
            entry["witness_cycle"] = list(rep.witness_cycle)
        factors.append(entry)
        write_csv(run.out / f"field_{f + 1}.csv", ("i", "j", "value"), fld.rows())
    total = fields[0]
    for fld in fields[1:]:
        total = total + fld
    total_entry = hodge_decompose(total).to_json()
    rep = score_representability(total, tol=1e-8 * (1 + float(np.max(np.abs(total.values)))))
    if not rep.representable:
        total_entry["witness_cycle"] = list(rep.witness_cycle)
    write_csv(run.out / "field_total.csv", ("i", "j", "value"), total.rows())
    limit = CURL_TABLE_ROWS if len(table.triangles) > CURL_TABLE_ROWS else None
    header = ["i", "j", "k", *(f"kappa_{f + 1}" for f in range(len(fields))), "total"]
    rows = table.rows(limit)
    write_csv(run.out / "curl_table.csv", header, rows)
    curl = table.to_json()
    curl["table_rows"] = len(rows)
    curl["table_truncated"] = limit is not None
    run.emit({"curl": curl, "factors": factors, "total": total_entry}, sem)


HANDLERS = {
    "decompose": cmd_decompose,
    "exchange": cmd_exchange,
    "geometry": cmd_geometry,
    "attribute": cmd_attribute,
    "rankdiff": cmd_rankdiff,
    "curl": cmd_curl,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        run = Run(args.command, cfg)
        HANDLERS[args.command](run)
    except InfluenceLedgerError as exc:
        print(f"influence-ledger {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"influence-ledger {args.command}: unexpected error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
