"""Batch command line: ``nonexpansive {analyze,calka,kobayashi,retract,semigroup}``.

Every command reads a JSON run config, writes deterministic JSON (and CSV)
reports into ``--out`` and puts wall-clock data in a separate
``metadata.json``.  Exit codes: 0 ok, 1 config, 2 budget, 3 Całka
precondition, 4 no recurrent anchor.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .errors import (BudgetExceeded, CoverFailure, NoRecurrentAnchor, NonexpansiveError,
                     NotFound, NotInjective, PreconditionUnmet, WrongMonotonicity)
from .maps import MapSpec, make_map
from .metric_core import SpaceSpec, make_space

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_CALKA, EXIT_NO_ANCHOR = 0, 1, 2, 3, 4
COMMANDS = ("analyze", "calka", "kobayashi", "retract", "semigroup")
ORBIT_COMMANDS = ("analyze", "calka", "retract")
CSV_COLUMNS = ("start_index", "verdict", "net_size", "escape_radius", "recurrent",
               "min_return_defect")


class ConfigError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Tolerances:
    eps: float = 1e-3
    eps_recur: float = 1e-3
    eps_retract: float = 1e-3
    eps_group: float = 5e-3


@dataclass
class Outputs:
    dir: str = "out"
    formats: list = field(default_factory=lambda: ["json", "csv"])


@dataclass
class RunConfig:
    space: dict | None = None
    map: dict | None = None
    starts: list = field(default_factory=list)
    horizon: int = 10_000
    tolerances: Tolerances = field(default_factory=Tolerances)
    radii: list | None = None
    seed: int = 0
    outputs: Outputs = field(default_factory=Outputs)
    calka: dict = field(default_factory=dict)
    kobayashi: dict = field(default_factory=dict)
    retract: dict = field(default_factory=dict)
    semigroup: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        """Everything that influences results (the output directory does not)."""
        d = asdict(self)
        d["outputs"] = {"formats": sorted(self.outputs.formats)}
        return d

    def digest(self) -> str:
        blob = json.dumps(_jsonable(self.canonical()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _positive(path, v, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError(path, f"must be a positive number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(path, f"must be an integer, got {v!r}")
    return kind(v)


def _record(path, v, allowed):
    if not isinstance(v, dict):
        raise ConfigError(path, "must be an object")
    extra = sorted(set(v) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}", "unknown field")
    return v


def parse_config(raw: dict, command: str) -> RunConfig:
    """Validate a decoded JSON config; errors name the offending field path."""
    top = _record("config", raw, RunConfig.__dataclass_fields__)
    cfg = RunConfig()
    for key in ("space", "map"):
        if key in top:
            v = top[key]
            if not isinstance(v, dict) or not isinstance(v.get("name"), str):
                raise ConfigError(key, "must be an object with a string 'name'")
            if "params" in v and not isinstance(v["params"], dict):
                raise ConfigError(f"{key}.params", "must be an object")
            setattr(cfg, key, v)
    if "starts" in top:
        if not isinstance(top["starts"], list):
            raise ConfigError("starts", "must be a list of coordinate arrays")
        for i, s in enumerate(top["starts"]):
            s = [s] if isinstance(s, (int, float)) and not isinstance(s, bool) else s
            if not isinstance(s, list) or not all(
                    isinstance(c, (int, float)) and not isinstance(c, bool) for c in s):
                raise ConfigError(f"starts[{i}]", "must be an array of numbers")
            cfg.starts.append([float(c) for c in s])
    if "horizon" in top:
        cfg.horizon = _positive("horizon", top["horizon"], int)
    if "seed" in top:
        if isinstance(top["seed"], bool) or not isinstance(top["seed"], int) or top["seed"] < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        cfg.seed = top["seed"]
    if "tolerances" in top:
        t = _record("tolerances", top["tolerances"], Tolerances.__dataclass_fields__)
        cfg.tolerances = Tolerances(**{k: _positive(f"tolerances.{k}", v) for k, v in t.items()})
    if top.get("radii") is not None:
        if not isinstance(top["radii"], list) or not top["radii"]:
            raise ConfigError("radii", "must be a nonempty list")
        cfg.radii = [_positive(f"radii[{i}]", r) for i, r in enumerate(top["radii"])]
    if "outputs" in top:
        o = _record("outputs", top["outputs"], Outputs.__dataclass_fields__)
        out = Outputs()
        if "dir" in o:
            if not isinstance(o["dir"], str):
                raise ConfigError("outputs.dir", "must be a string")
            out.dir = o["dir"]
        if "formats" in o:
            f = o["formats"]
            if not isinstance(f, list) or not set(f) <= {"json", "csv"}:
                raise ConfigError("outputs.formats", "must be a subset of ['json', 'csv']")
            out.formats = list(f)
        cfg.outputs = out
    for key in ("calka", "kobayashi", "retract", "semigroup"):
        if key in top:
            if not isinstance(top[key], dict):
                raise ConfigError(key, "must be an object")
            setattr(cfg, key, top[key])

    if command in ORBIT_COMMANDS and not (command == "calka" and "table" in cfg.calka):
        for key in ("space", "map"):
            if getattr(cfg, key) is None:
                raise ConfigError(key, f"required by '{command}'")
        if not cfg.starts:
            raise ConfigError("starts", f"must be nonempty for '{command}'")
    return cfg


def load_config(path: str, command: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON at line {e.lineno}: {e.msg}") from None
    return parse_config(raw, command)


def _jsonable(x):
    if isinstance(x, float):
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):
        return _jsonable(x.item())
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


class ReportWriter:
    """Single writer for all report files of one run."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.dir = Path(cfg.outputs.dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.header = {"tool": "nonexpansive", "version": __version__, "command": command,
                       "config_hash": cfg.digest()}
        self.written: list[str] = []

    def json(self, name: str, payload: dict):
        if "json" not in self.cfg.outputs.formats:
            return
        body = dict(self.header)
        body["report"] = payload
        text = json.dumps(_jsonable(body), sort_keys=True, indent=2) + "\n"
        (self.dir / name).write_text(text)
        self.written.append(name)

    def csv(self, name: str, columns, rows):
        if "csv" not in self.cfg.outputs.formats:
            return
        with open(self.dir / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow(["" if r.get(c) is None else _csv_cell(r[c]) for c in columns])
        self.written.append(name)

    def metadata(self, started: float, status: int, jobs: int):
        meta = {"started_unix": started, "elapsed_s": time.time() - started,
                "exit_code": status, "jobs": jobs, "files": self.written}
        (self.dir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")


def _csv_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _space_and_map(cfg: RunConfig):
    space = make_space(SpaceSpec.from_json(cfg.space))
    return space, make_map(MapSpec.from_json(cfg.map), space)


# -- analyze -----------------------------------------------------------------

def _analyze_one(args) -> dict:
    from .orbit_engine import classify_orbit, compute_orbit, detect_recurrence

    cfg_dict, index = args
    cfg = parse_config(cfg_dict, "analyze")
    space, m = _space_and_map(cfg)
    orbit = compute_orbit(m, cfg.starts[index], cfg.horizon)
    verdict = classify_orbit(orbit, cfg.tolerances.eps, cfg.radii)
    try:
        cert = detect_recurrence(orbit, cfg.tolerances.eps_recur)
        recurrent, min_defect = True, min(cert.return_defects)
        rec = {"return_times": cert.return_times, "return_defects": cert.return_defects,
               "gaps_increasing": cert.gaps_increasing}
    except NotFound as e:
        recurrent, min_defect, rec = False, e.min_defect, None
    ev = verdict.evidence
    return {
        "start_index": index,
        "start": cfg.starts[index],
        "verdict": verdict.kind.value,
        "evidence": ev,
        "recurrence": rec,
        "net_size": ev.get("net_size"),
        "escape_radius": max(ev["radii"]) if verdict.kind.value == "CompactlyDivergent" else None,
        "recurrent": recurrent,
        "min_return_defect": min_defect,
    }


def _pool_map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def run_analyze(cfg: RunConfig, out: ReportWriter, jobs: int) -> int:
    raw = _raw(cfg)
    rows = _pool_map(_analyze_one, [(raw, i) for i in range(len(cfg.starts))], jobs)
    for r in rows:
        out.json(f"start_{r['start_index']:04d}.json", r)
    out.csv("summary.csv", CSV_COLUMNS, rows)
    return EXIT_OK


def _raw(cfg: RunConfig) -> dict:
    return {k: v for k, v in asdict(cfg).items() if v is not None}


# -- calka -------------------------------------------------------------------

def run_calka(cfg: RunConfig, out: ReportWriter, jobs: int) -> int:
    from . import calka
    from .orbit_engine import compute_orbit

    opts = cfg.calka
    rhos = opts.get("rho", [0.5, 0.25])
    rhos = [rhos] if isinstance(rhos, (int, float)) else rhos
    rhos = [_positive(f"calka.rho[{i}]", r) for i, r in enumerate(rhos)]
    min_count = _positive("calka.min_ball_count", opts.get("min_ball_count", 50), int)
    scan_h = opts.get("sublemma_horizon")
    if "table" in opts:
        nm = calka.read_csv_table(opts["table"])
        source = {"table": os.path.basename(opts["table"])}
    else:
        _, m = _space_and_map(cfg)
        nm = calka.from_orbit(compute_orbit(m, cfg.starts[0], cfg.horizon))
        source = {"start": cfg.starts[0], "horizon": cfg.horizon}
    reports, status = [], EXIT_OK
    for rho in rhos:
        entry = {"rho": rho}
        try:
            rep = calka.run_lemma(nm, rho, min_count)
            entry.update(rep.to_json())
            if rep.M is None:
                entry["failure"] = "hypothesis not met: B(0, rho) too small or not covered"
                status = EXIT_CALKA
            if scan_h:
                entry["sublemma_scan"] = calka.scan_sublemma(nm, rho, int(scan_h))
        except CoverFailure as e:
            entry["failure"] = str(e)
            entry["uncovered"] = e.uncovered
            status = EXIT_CALKA
        except BudgetExceeded as e:
            entry["failure"] = str(e)
            status = EXIT_BUDGET if status == EXIT_OK else status
        reports.append(entry)
    out.json("calka.json", {"source": source, "horizon": nm.horizon,
                            "monotone_dir": nm.monotone_dir.value, "reports": reports})
    return status


# -- kobayashi ---------------------------------------------------------------

def run_kobayashi(cfg: RunConfig, out: ReportWriter, jobs: int) -> int:
    from .kobayashi import ChainSearchBudget, audit_schwarz_pick, kobayashi_upper_bound

    opts = cfg.kobayashi
    space_name = (cfg.space or {"name": "poincare-disk"})["name"]
    budget = ChainSearchBudget(**opts.get("budget", {}))
    pairs = opts.get("pairs", [])
    if not isinstance(pairs, list):
        raise ConfigError("kobayashi.pairs", "must be a list of [a, b] point pairs")
    rows = []
    for i, pair in enumerate(pairs):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"kobayashi.pairs[{i}]", "must be [a, b]")
        a, b = pair
        rows.append({"a": a, "b": b, "upper_bound": kobayashi_upper_bound(space_name, a, b, budget)})
    payload = {"space": space_name, "budget": asdict(budget), "pairs": rows}
    if cfg.map is not None:
        rep = audit_schwarz_pick(cfg.map["name"], int(opts.get("audit_pairs", 100)), cfg.seed,
                                 cfg.map.get("params"))
        payload["schwarz_pick"] = {"passed": rep.passed, "max_defect": rep.defect,
                                   "min_defect": rep.min_defect, "samples": rep.samples}
    out.json("kobayashi.json", payload)
    return EXIT_OK


# -- retract -----------------------------------------------------------------

def run_retract(cfg: RunConfig, out: ReportWriter, jobs: int) -> int:
    from .limit_group import (DIVERGENT, accumulation_hausdorff, audit_group_structure,
                              audit_mono_to_iso, check_convergence_criterion,
                              estimate_retraction)

    opts = cfg.retract
    tol = cfg.tolerances
    _, m = _space_and_map(cfg)
    est = estimate_retraction(m, cfg.starts, cfg.horizon, tol.eps_retract,
                              eps_recur=opts.get("eps_recur_anchor", tol.eps_recur),
                              eps_classify=tol.eps)
    net_eps = _positive("retract.net_eps", opts.get("net_eps", tol.eps_group))
    audit = audit_group_structure(m, est, net_eps, seed=cfg.seed)
    acc_eps = _positive("retract.accumulation_eps", opts.get("accumulation_eps", net_eps))
    acc = []
    for s, v in zip(est.sample, est.values):
        if v is DIVERGENT:
            continue
        h = accumulation_hausdorff(m, est, s, acc_eps, audit if acc_eps == net_eps else None)
        acc.append({"start": list(s.coordinates), "hausdorff": h, "passed": h <= 3 * acc_eps})
    iso = audit_mono_to_iso(m, est, seed=cfg.seed)
    out.json("retract.json", {
        "anchors": [list(a.coordinates) for a in est.anchors],
        "return_sequence": est.return_sequence[:64],
        "return_count": len(est.return_sequence),
        "residual": est.residual,
        "values": est.to_json()["values"],
        "idempotence_defect": est.idempotence_defect(),
        "anchor_fixing_defect": est.anchor_fixing_defect(),
        "group_defects": audit.to_json(),
        "group_passed": audit.passed(tol.eps_group),
        "criterion_agreement": check_convergence_criterion(m, est, eps=tol.eps_retract),
        "accumulation": acc,
        "mono_to_iso": {"passed": iso.passed, "defect": iso.defect},
    })
    return EXIT_OK


# -- semigroup ---------------------------------------------------------------

def run_semigroup(cfg: RunConfig, out: ReportWriter, jobs: int) -> int:
    from .limit_group import FiniteSemigroup, enumerate_semigroups, semigroup_is_group

    opts = cfg.semigroup
    payload = {}
    if "table" in opts:
        sg = FiniteSemigroup.from_csv(opts["table"])
        payload["table"] = {"order": sg.order, "is_group": semigroup_is_group(sg)}
    if "enumerate" in opts:
        top = _positive("semigroup.enumerate", opts["enumerate"], int)
        counts = []
        for n in range(1, top + 1):
            total = groups = 0
            for t in enumerate_semigroups(n):
                total += 1
                groups += semigroup_is_group(FiniteSemigroup(n, t))
            counts.append({"order": n, "semigroups": total, "groups": groups})
        payload["enumeration"] = counts
    if not payload:
        raise ConfigError("semigroup", "needs 'table' (CSV path) or 'enumerate' (max order)")
    out.json("semigroup.json", payload)
    return EXIT_OK


RUNNERS = {"analyze": run_analyze, "calka": run_calka, "kobayashi": run_kobayashi,
           "retract": run_retract, "semigroup": run_semigroup}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonexpansive",
                                description="Batch analysis of nonexpansive maps.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, metavar="PATH")
        s.add_argument("--out", metavar="DIR")
        s.add_argument("--jobs", type=int, default=os.cpu_count() or 1, metavar="N")
        s.add_argument("--seed", type=int, metavar="N")
        s.add_argument("--horizon", type=int, metavar="N")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.horizon is not None:
            cfg.horizon = _positive("--horizon", args.horizon, int)
        if args.out is not None:
            cfg.outputs.dir = args.out
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        out = ReportWriter(cfg, args.command)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status = RUNNERS[args.command](cfg, out, args.jobs)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        status = EXIT_CONFIG
    except BudgetExceeded as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        status = EXIT_BUDGET
    except (NotInjective, WrongMonotonicity, PreconditionUnmet) as e:
        print(f"calka precondition: {e}", file=sys.stderr)
        status = EXIT_CALKA
    except NoRecurrentAnchor as e:
        print(f"no recurrent anchor: {e}", file=sys.stderr)
        status = EXIT_NO_ANCHOR
    except NonexpansiveError as e:
        print(f"config error: {type(e).__name__}: {e}", file=sys.stderr)
        status = EXIT_CONFIG
    out.metadata(started, status, args.jobs)
    return status
