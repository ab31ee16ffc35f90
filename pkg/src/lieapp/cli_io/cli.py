"""Command-line front end.

Settings come from three layers: built-in defaults, an optional
``key = value`` config file, then command-line flags.
"""
from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from ..config import DEFAULT_TOL, InputError, LieAppError
from .catalog import KINDS, SurfaceSpec
from .formats import dumps
from .pipeline import EXIT_INPUT, FULL_RUN, STAGES, RunConfig, failure_record, run_pipeline


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2, which is reserved for failed certifications
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(dumps({"status": "error", "stage": "arguments", "error": "InputError",
                                "message": message, "exit_code": EXIT_INPUT}))
        sys.exit(EXIT_INPUT)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from exc


def _pair(text: str, kind=float) -> tuple:
    vals = _floats(text)
    if len(vals) != 2:
        raise InputError(f"expected two values, got {text!r}")
    return tuple(kind(v) for v in vals)


def _resolution(text: str) -> tuple:
    parts = str(text).lower().replace("x", ",").split(",")
    try:
        vals = [int(p) for p in parts if p]
    except ValueError as exc:
        raise InputError(f"bad resolution {text!r}") from exc
    if len(vals) == 1:
        vals *= 2
    if len(vals) != 2:
        raise InputError(f"bad resolution {text!r}")
    return tuple(vals)


def _bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InputError(f"expected a boolean, got {text!r}")


# key -> converter, shared by the config file and the flags
_KEYS = {
    "surface": str, "input": str, "resolution": _resolution, "param": str,
    "u_range": _pair, "v_range": _pair, "periodic_u": _bool, "periodic_v": _bool,
    "tol_algebraic": float, "tol_geometric": float, "tol_certification": float,
    "base": lambda s: _pair(s, int), "eps2": int, "uv": str,
    "t": _floats, "m": _floats, "seed": _floats, "order": int, "outdir": str,
}


def read_config(path) -> dict:
    """Flat ``key = value`` file; section headers and ``#`` comments are allowed."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string("[lieapp]\n" + text)
    except configparser.Error as exc:
        raise InputError(f"malformed config {path}: {exc}") from exc
    out = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            key = key.replace("-", "_")
            if key not in _KEYS:
                raise InputError(f"unknown config key {key!r}")
            out[key] = raw.strip().strip('"').strip("'")
    return out


def _add_common(p: argparse.ArgumentParser):
    g = p.add_argument_group("surface")
    g.add_argument("--surface", choices=KINDS, help="catalog surface kind")
    g.add_argument("--input", help="SurfaceGrid JSON file instead of a catalog surface")
    g.add_argument("--resolution", help="grid size, e.g. 64 or 64x48")
    g.add_argument("--param", action="append", help="surface parameter name=value (repeatable)")
    g.add_argument("--u-range", dest="u_range")
    g.add_argument("--v-range", dest="v_range")
    g.add_argument("--periodic-u", dest="periodic_u")
    g.add_argument("--periodic-v", dest="periodic_v")
    r = p.add_argument_group("run")
    r.add_argument("--config", help="key = value settings file; flags take precedence")
    r.add_argument("--tol-algebraic", dest="tol_algebraic")
    r.add_argument("--tol-geometric", dest="tol_geometric")
    r.add_argument("--tol-certification", dest="tol_certification")
    r.add_argument("--base", help="base node i,j (must be the grid centre)")
    r.add_argument("--eps2", help="Demoulin sign: 1, -1 or 0")
    r.add_argument("--uv", choices=("constant", "fit"), help="how U and V are chosen")
    r.add_argument("--t", help="Calapso parameters, comma separated")
    r.add_argument("--m", help="Darboux parameters, comma separated")
    r.add_argument("--seed", help="Darboux seed point x,y,z")
    r.add_argument("--order", help="transport order, 2 or 4")
    r.add_argument("--outdir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lieapp", description="Lie-applicable surface pipeline")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "gen": "sample a surface and write its grid JSON",
        "lift-check": "check the Legendre lift invariants",
        "invariants": "Lie metric and Darboux cubic",
        "omega-check": "certify the Demoulin system with a refinement study",
        "calapso": "Calapso transforms with invariance report",
        "darboux": "Darboux transforms with Ribaucour report",
        "associate": "associate surfaces and their checks",
        "export": "write the surface as JSON and OBJ",
        "run": "all stages in order",
    }
    for name in (*STAGES, "run"):
        _add_common(sub.add_parser(name, help=helps[name]))
    return p


def _params(items) -> dict:
    out = {}
    for item in items or ():
        for part in str(item).split(","):
            if not part.strip():
                continue
            if "=" not in part:
                raise InputError(f"surface parameter {part!r} is not name=value")
            k, v = part.split("=", 1)
            try:
                out[k.strip()] = float(v)
            except ValueError as exc:
                raise InputError(f"surface parameter {k!r} is not a number") from exc
    return out


def settings(args: argparse.Namespace) -> dict:
    """Merge config file and flags into converted values."""
    merged = read_config(args.config) if args.config else {}
    for key in _KEYS:
        val = getattr(args, key, None)
        if val is None:
            continue
        if key == "param":
            merged[key] = ",".join([merged.get(key, "")] + list(val))
        else:
            merged[key] = val
    out = {}
    for key, raw in merged.items():
        out[key] = _params([raw]) if key == "param" else _KEYS[key](raw)
    return out


def make_inputs(opts: dict):
    if opts.get("input") and opts.get("surface"):
        raise InputError("give either --surface or --input, not both")
    if opts.get("input"):
        spec = opts["input"]
    else:
        res = opts.get("resolution", (64, 64))
        spec = SurfaceSpec(
            kind=opts.get("surface", "catenoid"), m=res[0], n=res[1], params=opts.get("param", {}),
            u_range=opts.get("u_range"), v_range=opts.get("v_range"),
            periodic_u=opts.get("periodic_u"), periodic_v=opts.get("periodic_v"),
        )
    tol = DEFAULT_TOL.with_(**{k[4:]: v for k, v in opts.items() if k.startswith("tol_")})
    base = RunConfig()
    cfg = RunConfig(
        tolerances=tol, base=opts.get("base"), eps2=opts.get("eps2", base.eps2),
        uv=opts.get("uv", base.uv), t_values=opts.get("t", base.t_values),
        m_values=opts.get("m", base.m_values), seed=opts.get("seed", base.seed),
        order=opts.get("order", base.order), outdir=opts.get("outdir", base.outdir),
    )
    if cfg.order not in (2, 4):
        raise InputError("transport order must be 2 or 4")
    return spec, cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec, cfg = make_inputs(settings(args))
        stages = FULL_RUN if args.command == "run" else (args.command,)
        bundle = run_pipeline(spec, cfg, stages)
    except LieAppError as exc:
        rec = failure_record("setup", exc)
        sys.stderr.write(dumps(rec))
        return rec["exit_code"]
    bundle.pop("reports", None)
    sys.stdout.write(dumps(bundle))
    if bundle["failure"] is not None:
        sys.stderr.write(dumps(bundle["failure"]))
    return bundle["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
