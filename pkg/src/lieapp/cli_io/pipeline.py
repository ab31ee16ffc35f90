"""Sequential pipeline: lift, invariants, certification, transforms, associates.

Each stage returns a plain report dict; ``run_pipeline`` writes them as
deterministic JSON next to the OBJ meshes and folds the certification
verdicts into one exit code.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..config import DEFAULT_TOL, InputError, LieAppError, ParameterError, Tolerances, UnsupportedError
from ..legendre import LegendreGrid, SurfaceGrid, build_legendre, check_legendre
from .catalog import SurfaceSpec, generate
from .formats import read_grid, write_grid, write_json, write_obj

STAGES = ("gen", "lift-check", "invariants", "omega-check", "calapso", "darboux", "associate", "export")

EXIT_PASS, EXIT_CERT, EXIT_NUMERIC, EXIT_INPUT = 0, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    tolerances: Tolerances = DEFAULT_TOL
    base: tuple | None = None
    eps2: int = 1
    uv: str = "constant"
    t_values: tuple = (0.3,)
    m_values: tuple = (-1.0,)
    seed: tuple = (3.0, 0.0, 0.5)
    order: int = 4
    outdir: str = "lieapp-out"

    def validated(self, shape) -> "RunConfig":
        tol = self.tolerances
        for name in ("algebraic", "geometric", "certification"):
            if not getattr(tol, name) > 0:
                raise ParameterError(f"tolerance {name} must be positive")
        if self.eps2 not in (0, 1, -1):
            raise ParameterError("eps2 must be one of 1, -1, 0")
        if self.uv not in ("constant", "fit"):
            raise ParameterError("uv must be 'constant' or 'fit'")
        if any(m == 0 for m in self.m_values):
            raise ParameterError("Darboux parameters must be nonzero")
        if len(self.seed) != 3:
            raise ParameterError("seed point needs three coordinates")
        base = shape.base if self.base is None else tuple(int(b) for b in self.base)
        i, j = base
        inside_u = 0 <= i < shape.m if shape.periodic_u else 0 < i < shape.m - 1
        inside_v = 0 <= j < shape.n if shape.periodic_v else 0 < j < shape.n - 1
        if not (inside_u and inside_v):
            raise ParameterError(f"base node {base} is not interior")
        if base != shape.base:
            # frames, sections and trees are all pinned at the grid centre
            raise UnsupportedError(f"only the central base node {shape.base} is supported")
        return replace(self, base=base)


@dataclass
class Context:
    """Objects shared between stages of one run."""

    spec: SurfaceSpec | str
    config: RunConfig
    out: Path
    surface: SurfaceGrid | None = None
    grid: LegendreGrid | None = None
    data: object = None
    eta: object = None
    files: list = field(default_factory=list)

    @property
    def tol(self) -> Tolerances:
        return self.config.tolerances


def load_surface(spec, resolution: tuple | None = None) -> SurfaceGrid:
    """Catalog spec, or a path to a SurfaceGrid JSON file."""
    if isinstance(spec, (str, Path)):
        if resolution is not None:
            raise InputError("JSON grids cannot be resampled")
        return read_grid(spec)
    if resolution is not None:
        spec = spec.with_resolution(*resolution)
    return generate(spec)


def _omega_setup(grid: LegendreGrid, cfg: RunConfig):
    from ..omega_structure import OmegaData, fit_UV, middle_potential

    if cfg.uv == "fit":
        data = fit_UV(grid, cfg.eps2, tol=cfg.tolerances)
    else:
        data = OmegaData.constant(grid, cfg.eps2)
    eta = middle_potential(grid, data, certify=False)
    return data, eta


def _ensure_grid(ctx: Context):
    if ctx.surface is None:
        ctx.surface = load_surface(ctx.spec)
    if ctx.grid is None:
        ctx.grid = build_legendre(ctx.surface, tol=ctx.tol)
        ctx.config = ctx.config.validated(ctx.grid.shape)


def _ensure_eta(ctx: Context):
    _ensure_grid(ctx)
    if ctx.eta is None:
        ctx.data, ctx.eta = _omega_setup(ctx.grid, ctx.config)


def _obj(ctx: Context, name: str, grid: LegendreGrid):
    keep = ~grid.ideal if grid.ideal is not None else None
    s = grid.shape
    path = write_obj(ctx.out / name, grid.x, keep, (s.periodic_u, s.periodic_v))
    ctx.files.append(path.name)
    return path.name


def _scalar_max(a, mask=None) -> float:
    a = np.abs(np.asarray(a, float))
    if mask is not None:
        a = a[mask]
    a = a[np.isfinite(a)]
    return float(a.max()) if a.size else 0.0


# ------------------------------------------------------------- stages

def stage_gen(ctx: Context) -> dict:
    _ensure_grid(ctx)
    s = ctx.surface.shape
    path = write_grid(ctx.out / "surface.json", ctx.surface)
    ctx.files.append(path.name)
    return {"name": ctx.surface.name, "m": s.m, "n": s.n, "du": s.du, "dv": s.dv,
            "periodic_u": s.periodic_u, "periodic_v": s.periodic_v, "passed": True}


def stage_lift_check(ctx: Context) -> dict:
    _ensure_grid(ctx)
    rep = check_legendre(ctx.grid, ctx.tol)
    inv_ok = max(rep["invariants"].values()) < ctx.tol.algebraic
    rep["passed"] = bool(inv_ok and rep["immersed"])
    return rep


def stage_invariants(ctx: Context) -> dict:
    from ..lie_invariants import darboux_cubic, lie_metric

    _ensure_grid(ctx)
    g = ctx.grid
    reg = g.regular & g.shape.interior_mask()
    gl = lie_metric(g)
    cub = darboux_cubic(g)
    return {
        "lie_metric_max": _scalar_max(gl.b, reg),
        "darboux_cubic_max": max(_scalar_max(cub.A, reg), _scalar_max(cub.B, reg)),
        "umbilic_count": int(np.sum(g.umbilic)),
        "passed": True,
    }


def stage_omega_check(ctx: Context) -> dict:
    from ..omega_structure import omega_report, refinement_study

    _ensure_eta(ctx)
    coarse = omega_report(ctx.grid, ctx.data, ctx.tol)
    out = {"coarse": _strip(coarse)}
    if isinstance(ctx.spec, SurfaceSpec):
        fs = ctx.grid.shape.refined()
        fine_grid = build_legendre(load_surface(ctx.spec, (fs.m, fs.n)), tol=ctx.tol)
        fine_data, _ = _omega_setup(fine_grid, ctx.config)
        fine = omega_report(fine_grid, fine_data, ctx.tol)
        study = refinement_study(coarse, fine, ctx.tol)
        out.update(fine=_strip(fine), refinement=study["criteria"], passed=study["pass"])
    else:
        # a fixed grid cannot be refined: single-grid verdict only
        out["passed"] = coarse["pass_fine"]
    return out


def stage_calapso(ctx: Context) -> dict:
    from ..gauge_transforms import calapso_report

    _ensure_eta(ctx)
    runs = []
    ok = True
    for t in ctx.config.t_values:
        rep = calapso_report(ctx.grid, ctx.eta, float(t), order=ctx.config.order, tol=ctx.tol)
        name = _obj(ctx, f"calapso_t{_tag(t)}.obj", rep["grid"])
        passed = (rep["q_deviation"] < ctx.tol.certification
                  and rep["lie_metric_deviation"] < ctx.tol.certification)
        ok &= passed
        runs.append({k: v for k, v in rep.items() if k not in ("grid", "frame")} | {"obj": name, "passed": passed})
    return {"runs": runs, "passed": bool(ok)}


def stage_darboux(ctx: Context) -> dict:
    from ..gauge_transforms import darboux, enveloping_point, ribaucour_check

    _ensure_eta(ctx)
    runs = []
    ok = True
    for m in ctx.config.m_values:
        res = darboux(ctx.grid, ctx.eta, float(m), seed_point=ctx.config.seed,
                      order=ctx.config.order, tol=ctx.tol)
        rib = ribaucour_check(res)
        env = enveloping_point(res.grid, res.f_hat, ctx.tol)
        name = _obj(ctx, f"darboux_m{_tag(m)}.obj", res.f_hat)
        passed = res.null_drift < ctx.tol.geometric and res.loop_residual < ctx.tol.certification
        ok &= passed
        runs.append({
            "m": float(m), "seed_point": list(ctx.config.seed),
            "null_drift": res.null_drift, "section_loop": res.loop_residual,
            "contact_residual": res.contact_residual, "genericity": res.genericity,
            "ribaucour_holonomy": rib["holonomy"],
            "curvature_direction_residual": rib["curvature_direction_residual"],
            "enveloping_intersection": env["intersection_residual"],
            "enveloping_derivative": env["derivative_residual"],
            "ideal_nodes": int(np.sum(res.f_hat.ideal)),
            "obj": name, "passed": bool(passed),
        })
    return {"runs": runs, "passed": bool(ok)}


def stage_associate(ctx: Context) -> dict:
    from ..associate import associate_report

    _ensure_eta(ctx)
    rep = associate_report(ctx.grid, ctx.eta, ctx.tol)
    tr = rep.pop("triple")
    s = ctx.grid.shape
    per = (s.periodic_u, s.periodic_v)
    names = {}
    for key, x in (("x", tr.x), ("associate", tr.xD), ("associate_gauss", tr.xhat)):
        path = write_obj(ctx.out / f"{key}.obj", x, None, per)
        ctx.files.append(path.name)
        names[key] = path.name
    cert = ctx.tol.certification
    rep["passed"] = bool(rep["asscurv"] < cert and rep["assocsurf"] < cert
                         and rep["round_trip"] < 1e-6 and rep["dual_q_deviation"] < cert)
    rep["obj"] = names
    return rep


def stage_export(ctx: Context) -> dict:
    _ensure_grid(ctx)
    a = write_grid(ctx.out / "surface.json", ctx.surface).name
    b = _obj(ctx, "surface.obj", ctx.grid)
    ctx.files.append(a)
    return {"json": a, "obj": b, "passed": True}


_STAGE_FUNCS = {
    "gen": stage_gen, "lift-check": stage_lift_check, "invariants": stage_invariants,
    "omega-check": stage_omega_check, "calapso": stage_calapso, "darboux": stage_darboux,
    "associate": stage_associate, "export": stage_export,
}

# stages a full run executes
FULL_RUN = ("lift-check", "invariants", "omega-check", "calapso", "darboux", "associate", "export")


def _tag(x) -> str:
    return format(float(x), "g").replace("-", "n").replace(".", "p")


def _strip(rep: dict) -> dict:
    return {k: v for k, v in rep.items() if k != "summary"}


def _clean(obj):
    """Drop arrays and objects that do not belong in a JSON report."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items() if not _is_bulk(v)}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray) and obj.ndim == 0:
        return obj.item()
    return obj


def _is_bulk(v) -> bool:
    if isinstance(v, np.ndarray):
        return v.size > 16
    return hasattr(v, "__dataclass_fields__")


def failure_record(stage: str, exc: BaseException) -> dict:
    code = getattr(exc, "exit_code", EXIT_NUMERIC)
    rec = {"status": "error", "stage": stage, "error": type(exc).__name__,
           "message": str(exc), "exit_code": code}
    nodes = getattr(exc, "nodes", None)
    if nodes:
        rec["nodes"] = [list(map(int, n)) for n in list(nodes)[:50]]
        rec["node_count"] = len(nodes)
    return rec


def run_pipeline(spec, config: RunConfig | None = None, stages=None) -> dict:
    """Run ``stages`` (default: all) and write reports into ``config.outdir``.

    Returns the bundle written to ``report.json``; its ``exit_code`` is 0
    only when every requested certification passed.
    """
    config = config or RunConfig()
    stages = tuple(stages or FULL_RUN)
    for st in stages:
        if st not in _STAGE_FUNCS:
            raise InputError(f"unknown stage {st!r}")
    out = Path(config.outdir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(spec=spec, config=config, out=out)
    reports, failure = {}, None
    for st in stages:
        try:
            rep = _clean(_STAGE_FUNCS[st](ctx))
        except LieAppError as exc:
            failure = failure_record(st, exc)
            break
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            failure = failure_record(st, exc)
            break
        reports[st] = rep
        write_json(out / f"report_{st}.json", rep)
    if failure is not None:
        code = failure["exit_code"]
        write_json(out / "failure.json", failure)
    else:
        code = EXIT_PASS if all(r.get("passed", True) for r in reports.values()) else EXIT_CERT
    bundle = {
        "surface": _describe(spec),
        "stages": list(stages),
        "passed": {k: bool(r.get("passed", True)) for k, r in reports.items()},
        "failure": failure,
        "files": sorted(set(ctx.files)),
        "exit_code": code,
    }
    write_json(out / "report.json", bundle)
    bundle["reports"] = reports
    return bundle


def _describe(spec) -> dict:
    if isinstance(spec, SurfaceSpec):
        r = spec.resolved()
        return {"kind": r.kind, "m": r.m, "n": r.n, "params": r.params,
                "u_range": list(r.u_range), "v_range": list(r.v_range),
                "periodic_u": r.periodic_u, "periodic_v": r.periodic_v}
    return {"kind": "json", "path": Path(spec).name}
