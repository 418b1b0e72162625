"""Command-line front end: ``parlab capacity | classify | reproduce``.

Exit codes: 0 success, 1 a reproduced conclusion failed, 2 solver or
precondition error, 3 configuration error.  Outputs are written all at once
or not at all.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Tuple

from .classify import (
    area_criterion,
    capacity_decay_test,
    d_parabolicity_test,
    reflected_walk_test,
    volume_criterion,
)
from .errors import ConfigError, IoError, ParlabError, ParseError
from .families import STOCK, family_for_model, stock_family
from .geometry import (
    build_annulus_mesh,
    build_disk_mesh,
    build_halfannulus_mesh,
    build_halfdisk_mesh,
    build_model,
    load_mesh,
)
from .output import field_csv, to_json, write_outputs
from .potential import Condenser, absolute_capacity, condenser_capacity
from .reproduce import THEOREMS

log = logging.getLogger("parlab")

EXIT_OK, EXIT_ASSERT, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3
METHODS = ("volume", "area", "capacity", "d", "walk")
# exponential warps overflow the metric on long exhaustions
DEFAULT_EXHAUSTION = {"hyperbolic": (2.0, 1.5, 6), "cusp": (2.0, 1.5, 5)}
FALLBACK_EXHAUSTION = (2.0, 2.0, 6)


@dataclass
class RunConfig:
    command: str
    mesh: Optional[str] = None
    gen: Optional[str] = None
    tol: float = 1e-10
    exhaustion: Optional[Tuple[float, float, int]] = None
    seed: Optional[int] = None
    out: Optional[str] = None
    method: Optional[str] = None
    theorem: Optional[str] = None
    trials: int = 100_000
    K_marker: str = "inner"
    omega_marker: str = "outer"
    options: Dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.mesh and self.gen:
            raise ConfigError("give either a mesh path or a generator spec, not both")
        if not (isinstance(self.tol, (int, float)) and self.tol > 0):
            raise ConfigError(f"tolerance must be positive, got {self.tol!r}")
        if self.exhaustion is not None:
            try:
                base, ratio, count = self.exhaustion
                self.exhaustion = (float(base), float(ratio), int(count))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"exhaustion must be base,ratio,count: {exc}") from exc
            if self.exhaustion[2] < 1 or self.exhaustion[0] <= 0 or self.exhaustion[1] <= 1:
                raise ConfigError("exhaustion needs base > 0, ratio > 1 and count >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        return self


def parse_gen(spec: str) -> Tuple[str, Dict[str, str]]:
    """``kind:key=value,key=value`` into (kind, params)."""
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"generator parameter {item!r} is not key=value")
        params[key.strip()] = value.strip()
    return kind.strip(), params


def _num(params: Dict[str, str], key: str, default=None) -> float:
    if key not in params:
        if default is None:
            raise ConfigError(f"generator parameter {key!r} is required")
        return default
    try:
        return float(params[key])
    except ValueError as exc:
        raise ConfigError(f"generator parameter {key}={params[key]!r} is not a number") from exc


PLANAR = {
    "disk": lambda p: build_disk_mesh(_num(p, "radius"), _num(p, "h")),
    "annulus": lambda p: build_annulus_mesh(_num(p, "a"), _num(p, "b"), _num(p, "h")),
    "halfdisk": lambda p: build_halfdisk_mesh(_num(p, "radius"), _num(p, "h")),
    "halfannulus": lambda p: build_halfannulus_mesh(_num(p, "a"), _num(p, "b"), _num(p, "h")),
}


def family_from_config(cfg: RunConfig):
    """Exhaustion family from ``model:kind=..,dim=..,sector=..`` or ``stock:name=..``."""
    if not cfg.gen:
        raise ConfigError("this command needs a model generator spec (--gen model:... or stock:name=...)")
    kind, p = parse_gen(cfg.gen)
    n_theta = int(_num(p, "n_theta", 64))
    if kind == "stock":
        name = p.get("name")
        if name not in STOCK:
            raise ConfigError(f"unknown stock family {name!r}; choose from {sorted(STOCK)}")
        return stock_family(name, cfg.exhaustion, n_theta)
    if kind != "model":
        raise ConfigError(f"generator {kind!r} does not describe a model manifold")
    params = [float(x) for x in p["params"].split(";")] if p.get("params") else []
    try:
        model = build_model(p.get("kind", "euclidean"), params, int(_num(p, "dim", 2)), _num(p, "sector", 1.0))
    except (ParlabError, ValueError) as exc:
        raise ConfigError(f"invalid model spec: {exc}") from exc
    ex = cfg.exhaustion or DEFAULT_EXHAUSTION.get(model.kind, FALLBACK_EXHAUSTION)
    return family_for_model(model, ex, n_theta)


def mesh_from_config(cfg: RunConfig):
    if cfg.mesh:
        try:
            return load_mesh(cfg.mesh)
        except (IoError, ParseError) as exc:
            raise ConfigError(str(exc)) from exc
    if not cfg.gen:
        raise ConfigError("a mesh path (--mesh) or generator spec (--gen) is required")
    kind, p = parse_gen(cfg.gen)
    if kind not in PLANAR:
        raise ConfigError(f"unknown mesh generator {kind!r}; choose from {sorted(PLANAR)}")
    return PLANAR[kind](p)


# ----------------------------------------------------------------------------
def cmd_capacity(cfg: RunConfig) -> Tuple[int, Dict[str, str]]:
    if cfg.gen and parse_gen(cfg.gen)[0] in ("model", "stock"):
        report = absolute_capacity(family_from_config(cfg))
        return EXIT_OK, {"capacity.json": report.to_json() + "\n", "exhaustion.csv": report.to_csv()}
    mesh = mesh_from_config(cfg)
    cond = Condenser.from_markers(mesh, cfg.K_marker, cfg.omega_marker)
    res = condenser_capacity(cond)
    doc = {"value": res.value, "energy_residual": res.energy_residual, "n_vertices": mesh.n_vertices,
           "K_marker": cfg.K_marker, "omega_marker": cfg.omega_marker}
    return EXIT_OK, {"capacity.json": to_json(doc), "potential.csv": field_csv(res.potential.values)}


def cmd_classify(cfg: RunConfig) -> Tuple[int, Dict[str, str]]:
    methods = list(METHODS[:4]) if cfg.method in (None, "all") else [m.strip() for m in cfg.method.split(",")]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
    if "walk" in methods and cfg.seed is None:
        raise ConfigError("method walk is stochastic and needs --seed")
    fam = family_from_config(cfg)
    files, results = {}, {}
    for m in methods:
        if m == "volume":
            c = volume_criterion(fam.model, **_radii(cfg))
        elif m == "area":
            c = area_criterion(fam.model, **_radii(cfg))
        elif m == "capacity":
            c = capacity_decay_test(fam)
        elif m == "d":
            c = d_parabolicity_test(fam)
        else:
            mesh = fam.mesh(1)
            est = reflected_walk_test(mesh, mesh.vertices_with(marker="inner"), "outer", cfg.trials, cfg.seed,
                                      fam.probe_vertex(mesh))
            results[m] = asdict(est)
            files["walk.json"] = to_json(est)
            continue
        results[m] = c.to_dict()
        if c.evidence:
            files[f"evidence_{m}.csv"] = c.evidence_csv()
    files["classification.json"] = to_json({"family": fam.describe(), "results": results})
    return EXIT_OK, files


def _radii(cfg: RunConfig) -> dict:
    out = {}
    for key in ("R_max", "R_min"):
        if key in cfg.options:
            out[key] = float(cfg.options[key])
    return out


def cmd_reproduce(cfg: RunConfig) -> Tuple[int, Dict[str, str]]:
    if cfg.theorem not in THEOREMS:
        raise ConfigError(f"unknown theorem {cfg.theorem!r}; choose from {sorted(THEOREMS)}")
    opts = dict(cfg.options)
    if cfg.exhaustion is not None:
        opts["exhaustion"] = cfg.exhaustion
    rep = THEOREMS[cfg.theorem](opts)
    files = dict(rep.tables)
    files["report.json"] = to_json(rep.to_dict())
    if not rep.passed:
        print(f"assertion failed: {rep.failure}", file=sys.stderr)
        return EXIT_ASSERT, files
    return EXIT_OK, files


COMMANDS = {"capacity": cmd_capacity, "classify": cmd_classify, "reproduce": cmd_reproduce}


# ----------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config document; flags override its fields")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--mesh", help="mesh JSON file")
    src.add_argument("--gen", help="generator spec, e.g. annulus:a=1,b=2,h=0.03 or model:kind=hyperbolic,sector=0.5")
    common.add_argument("--tol", type=float)
    common.add_argument("--exhaustion", help="base,ratio,count")
    common.add_argument("--method", help=f"one of {', '.join(METHODS)}, a comma list, or all")
    common.add_argument("--trials", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="parlab", description="Potential theory and parabolicity on meshed manifolds.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("capacity", parents=[common], help="condenser or absolute capacity")
    sub.add_parser("classify", parents=[common], help="parabolicity classification")
    rp = sub.add_parser("reproduce", parents=[common], help="reproduce a theorem's checkable conclusion")
    rp.add_argument("theorem_id", nargs="?", help=f"one of {', '.join(sorted(THEOREMS))}")
    rp.add_argument("--theorem", dest="theorem_flag")
    return p


def load_config(args: argparse.Namespace) -> RunConfig:
    doc = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
    known = {f for f in RunConfig.__dataclass_fields__ if f != "command"}
    options = dict(doc.pop("options", {}) or {})
    options.update({k: v for k, v in doc.items() if k not in known and k != "command"})
    fields = {k: v for k, v in doc.items() if k in known}
    theorem = getattr(args, "theorem_id", None) or getattr(args, "theorem_flag", None)
    flags = {"mesh": args.mesh, "gen": args.gen, "tol": args.tol, "seed": args.seed, "out": args.out,
             "method": args.method, "theorem": theorem, "trials": args.trials}
    if args.exhaustion:
        try:
            flags["exhaustion"] = tuple(x.strip() for x in args.exhaustion.split(","))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if flags["mesh"] or flags["gen"]:
        fields.pop("mesh", None)
        fields.pop("gen", None)
    fields.update({k: v for k, v in flags.items() if v is not None})
    try:
        cfg = RunConfig(command=args.command, options=options, **fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        code, files = COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParlabError, ValueError, KeyError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if code != EXIT_OK:
        return code
    out = cfg.out or os.path.join("parlab-out", cfg.command)
    files["config.json"] = to_json(asdict(cfg))
    try:
        write_outputs(out, files)
    except IoError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(out)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
