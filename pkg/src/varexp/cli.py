"""Batch runner: ``varexp-solve run <config> [--out DIR] [--seed N] [--task T]``.

The config is a YAML mapping; unknown keys are rejected with the line they
appear on.  Every run writes ``run_report.json`` plus CSV tables and fields;
identical config and seed give byte-identical files.  Wall-clock timings
are only written (to ``timings.json``) with ``--timings``.

Log verbosity comes from the ``VAREXP_LOG`` environment variable
(``DEBUG``, ``INFO``, ``WARNING`` ...; default ``WARNING``).

Exit codes: 0 success, 1 solver failure or bad input, 2 hypothesis or
admissibility violation in the ``verify`` task.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from varexp.energy import Problem, energy
from varexp.errors import ConfigError, VarExpError
from varexp.exponent import build_exponent, check_admissibility, log_holder_estimate
from varexp.mesh import build_mesh
from varexp.modular import luxemburg_norm, modular, sobolev0_norm
from varexp.problem import FAMILIES, make_kernel, model_reaction, verify_kernel_hypotheses, verify_reaction_hypotheses
from varexp.solvers.common import TRACE_HEADER, SolverConfig
from varexp.solvers.fountain import build_subspace_ladder, fountain_search, laplacian_modes
from varexp.solvers.mountain_pass import mountain_pass_solve, verify_mp_geometry
from varexp.solvers.rayleigh import global_minimize_at_lambda, lambda1_minimize

log = logging.getLogger("varexp")

__all__ = ["ExperimentConfig", "load_config", "run", "emit_tables", "main", "TASKS"]

TASKS = ("verify", "mountain-pass", "fountain", "lambda1", "minimize-at-lambda", "norms")
FOUNTAIN_HEADER = ("k", "energy", "grad_norm", "sign_changes")
SWEEP_HEADER = ("scale", "quotient")

_TOP = {"mesh", "p", "q", "kernel", "reaction", "task", "solver", "seed", "output", "options"}
_MESH = {"box", "cells"}
_KERNEL = {"family", "a1", "a2", "a3"}
_REACTION = {"family", "c", "C", "mu", "R", "odd"}
_OPTIONS = {"phi", "sphere_samples", "K", "ladder_samples", "lambda", "lambda1_start", "u"}
_SOLVER = set(SolverConfig.__dataclass_fields__)


# ------------------------------------------------------------------ config

@dataclass
class ExperimentConfig:
    mesh: dict
    p: object
    q: object
    kernel: dict = field(default_factory=lambda: {"family": "pxLaplacian"})
    reaction: dict = field(default_factory=dict)
    task: str = "verify"
    solver: dict = field(default_factory=dict)
    seed: int = 0
    output: str = "varexp_out"
    options: dict = field(default_factory=dict)
    source: str = "<config>"

    def solver_config(self):
        return SolverConfig().updated(seed=self.seed, **self.solver)


def _lines(node, path=(), out=None):
    """Map key paths to 1-based line numbers from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = k.start_mark.line + 1
            _lines(v, key, out)
    return out


def _check_keys(section, allowed, path, lines, source):
    if not isinstance(section, dict):
        where = ".".join(path) or "top level"
        raise ConfigError(f"{source}: {where} must be a mapping")
    for key in section:
        if key not in allowed:
            line = lines.get(tuple(path) + (key,), "?")
            where = ".".join(list(path) + [str(key)])
            raise ConfigError(f"{source}:{line}: unknown key '{where}' (allowed: {', '.join(sorted(allowed))})")


def load_config(path):
    """Parse and strictly validate a YAML experiment config."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark else "?"
        raise ConfigError(f"{path}:{line}: YAML syntax error: {exc.problem}") from exc
    if data is None:
        raise ConfigError(f"{path}: config is empty")
    lines = _lines(node)
    src = str(path)
    _check_keys(data, _TOP, [], lines, src)
    for key in ("mesh", "p", "q"):
        if key not in data:
            raise ConfigError(f"{src}: missing required key '{key}'")
    _check_keys(data["mesh"], _MESH, ["mesh"], lines, src)
    for name, allowed in (("kernel", _KERNEL), ("reaction", _REACTION), ("solver", _SOLVER),
                          ("options", _OPTIONS)):
        if name in data:
            _check_keys(data[name], allowed, [name], lines, src)
    for key in ("p", "q"):
        v = data[key]
        if isinstance(v, dict):
            _check_keys(v, {"table"}, [key], lines, src)
    task = data.get("task", "verify")
    if task not in TASKS:
        raise ConfigError(f"{src}:{lines.get(('task',), '?')}: task must be one of {', '.join(TASKS)}")
    kernel = data.get("kernel", {"family": "pxLaplacian"})
    fam = kernel.get("family", "pxLaplacian")
    if fam not in FAMILIES or fam == "custom":
        raise ConfigError(f"{src}:{lines.get(('kernel', 'family'), '?')}: kernel family must be one of "
                          f"pxLaplacian, weightedPxLaplacian, pxMeanCurvature")
    reaction = data.get("reaction", {})
    if reaction.get("family", "model") != "model":
        raise ConfigError(f"{src}:{lines.get(('reaction', 'family'), '?')}: only the model reaction is "
                          "available from a config file")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"{src}:{lines.get(('seed',), '?')}: seed must be an integer")
    return ExperimentConfig(mesh=data["mesh"], p=data["p"], q=data["q"], kernel=dict(kernel),
                            reaction=dict(reaction), task=task, solver=dict(data.get("solver", {})),
                            seed=seed, output=str(data.get("output", "varexp_out")),
                            options=dict(data.get("options", {})), source=src)


def _field_spec(spec):
    return spec["table"] if isinstance(spec, dict) else spec


def build_problem(cfg):
    mesh_spec = cfg.mesh
    if "box" not in mesh_spec or "cells" not in mesh_spec:
        raise ConfigError(f"{cfg.source}: mesh needs both 'box' and 'cells'")
    mesh = build_mesh(mesh_spec["box"], mesh_spec["cells"])
    p = build_exponent(_field_spec(cfg.p), mesh)
    q = build_exponent(_field_spec(cfg.q), mesh)
    kw = {k: cfg.kernel[k] for k in ("a1", "a2", "a3") if k in cfg.kernel}
    kernel = make_kernel(cfg.kernel.get("family", "pxLaplacian"), p, **kw)
    r = cfg.reaction
    reaction = model_reaction(q, c=_field_spec(r.get("c", 1.0)), C=r.get("C"), mu=r.get("mu"), R=r.get("R", 1.0))
    if "odd" in r:
        reaction.odd = bool(r["odd"])
    return Problem(kernel, reaction)


# ------------------------------------------------------------------ output

def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


class _Writer:
    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def csv(self, name, header, rows, kind):
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self.files.append({"file": name, "kind": kind, "columns": list(header)})
        return name

    def nodes(self, name, mesh, values):
        cols = ("x", "y")[: mesh.dim] + ("value",)
        rows = (tuple(c) + (v,) for c, v in zip(mesh.nodes.tolist(), np.asarray(values, float).tolist()))
        return self.csv(name, cols, rows, "nodes")

    def trace(self, name, trace):
        return self.csv(name, TRACE_HEADER, (r.row() for r in trace), "trace")

    def json(self, name, obj):
        with open(self.out / name, "w") as fh:
            json.dump(_clean(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")


def emit_tables(reports, writer):
    """Write the task tables: fountain (k, energy, grad_norm, sign_changes)
    and lambda1 sweep (scale, quotient).  Returns the file names."""
    if not isinstance(writer, _Writer):
        writer = _Writer(writer)
    names = []
    if "fountain" in reports:
        rows = [(k, r.energy.total, r.grad_norm, r.extras["sign_changes"])
                for k, r in enumerate(reports["fountain"], start=1)]
        names.append(writer.csv("fountain_table.csv", FOUNTAIN_HEADER, rows, "fountain_table"))
    if "lambda1" in reports:
        names.append(writer.csv("lambda1_sweep.csv", SWEEP_HEADER, reports["lambda1"].sweep, "lambda1_sweep"))
    return names


# ------------------------------------------------------------------ tasks

def _default_phi(prob, options):
    if "phi" in options:
        from varexp.exponent import evaluate_expression

        phi = evaluate_expression(str(options["phi"]), prob.mesh.nodes)
        phi[prob.mesh.boundary] = 0.0
        return phi
    return laplacian_modes(prob.mesh, 1)[1][0]


def _task_verify(prob, cfg, scfg, w, report):
    adm = check_admissibility(prob.p, prob.q)
    kh = verify_kernel_hypotheses(prob.kernel)
    rh = verify_reaction_hypotheses(prob.reaction, prob.p)
    report["admissibility"] = {
        "c_plus_ok": adm.c_plus_ok, "growth_gap_ok": adm.growth_gap_ok, "subcritical_ok": adm.subcritical_ok,
        "a5_ok": adm.a5_ok, "log_holder_estimate": adm.log_holder_estimate,
        "log_holder_q": log_holder_estimate(prob.q),
    }
    report["hypotheses"] = {"kernel": kh.to_dict(), "reaction": rh.to_dict()}
    violated = (not adm.all_ok) or kh.any_violated or rh.any_violated
    report["verdict"] = "violated" if violated else "holds_on_sample"
    return 2 if violated else 0


def _task_mountain_pass(prob, cfg, scfg, w, report):
    phi = _default_phi(prob, cfg.options)
    geo = verify_mp_geometry(prob, phi, cfg.options.get("sphere_samples"), scfg)
    report["geometry"] = geo.summary()
    rep = mountain_pass_solve(prob, geo, scfg)
    report["solve"] = rep.summary()
    report["solve"]["solution_file"] = w.nodes("solution.csv", prob.mesh, rep.solution)
    report["solve"]["trace_file"] = w.trace("trace.csv", rep.trace)
    return 0


def _task_fountain(prob, cfg, scfg, w, report):
    K = int(cfg.options.get("K", 6))
    ladder = build_subspace_ladder(prob, K, int(cfg.options.get("ladder_samples", 200)), seed=scfg.seed)
    report["ladder"] = {"K": ladder.K, "eigenvalues": ladder.eigenvalues, "alpha": ladder.alpha,
                        "gram_cond": ladder.gram_cond}
    res = fountain_search(prob, ladder, scfg)
    report["hypotheses"] = {"reaction": res.hypotheses.to_dict()}
    report["diagnostics"] = res.diagnostics
    sols = []
    for k, rep in enumerate(res, start=1):
        s = rep.summary()
        s["solution_file"] = w.nodes(f"solution_{k}.csv", prob.mesh, rep.solution)
        s["trace_file"] = w.trace(f"trace_{k}.csv", rep.trace)
        sols.append(s)
    report["solutions"] = sols
    report["tables"] = emit_tables({"fountain": res}, w)
    return 0 if len(res) else 1


def _task_lambda1(prob, cfg, scfg, w, report):
    res = lambda1_minimize(prob, scfg)
    report["lambda1"] = res.summary()
    if res.minimizer is not None:
        report["lambda1"]["minimizer_file"] = w.nodes("lambda1_minimizer.csv", prob.mesh, res.minimizer)
    report["tables"] = emit_tables({"lambda1": res}, w)
    return 0


def _task_minimize(prob, cfg, scfg, w, report):
    if "lambda" not in cfg.options:
        raise ConfigError(f"{cfg.source}: task minimize-at-lambda needs options.lambda")
    lam = float(cfg.options["lambda"])
    start = None
    if cfg.options.get("lambda1_start", True):
        l1 = lambda1_minimize(prob, scfg)
        report["lambda1"] = {"lambda1_est": l1.lambda1_est, "degeneracy_flag": l1.degeneracy_flag}
        start = l1.minimizer
    rep = global_minimize_at_lambda(prob, lam, scfg, start=start)
    report["solve"] = rep.summary()
    report["solve"]["solution_file"] = w.nodes("solution.csv", prob.mesh, rep.solution)
    report["solve"]["trace_file"] = w.trace("trace.csv", rep.trace)
    return 1 if rep.status == "max_iter" else 0


def _task_norms(prob, cfg, scfg, w, report):
    from varexp.exponent import evaluate_expression

    expr = str(cfg.options.get("u", "x*(1-x)" if prob.mesh.dim == 1 else "x*(1-x)*y*(1-y)"))
    u = evaluate_expression(expr, prob.mesh.nodes)
    out = {"u": expr}
    for name, ex in (("p", prob.p), ("q", prob.q)):
        nr = luxemburg_norm(u, ex)
        out[name] = {"modular": modular(u, ex), "luxemburg": nr.value, "modular_at_norm": nr.modular_at_value}
    if np.abs(u[prob.mesh.boundary]).max() <= 1e-12:
        out["sobolev0"] = sobolev0_norm(u, prob.p)
        out["energy"] = energy(prob, u).__dict__
    report["norms"] = out
    report["field_file"] = w.nodes("field.csv", prob.mesh, u)
    return 0


_RUNNERS = {
    "verify": _task_verify,
    "mountain-pass": _task_mountain_pass,
    "fountain": _task_fountain,
    "lambda1": _task_lambda1,
    "minimize-at-lambda": _task_minimize,
    "norms": _task_norms,
}


def run(config_path, out=None, seed=None, task=None, timings=False):
    """Execute one configured experiment and return the exit code."""
    t0 = time.perf_counter()
    cfg = load_config(config_path)
    if seed is not None:
        cfg.seed = int(seed)
    if task is not None:
        if task not in TASKS:
            raise ConfigError(f"task must be one of {', '.join(TASKS)}")
        cfg.task = task
    w = _Writer(out or cfg.output)
    report = {"task": cfg.task, "seed": cfg.seed, "config": Path(cfg.source).name}
    try:
        scfg = cfg.solver_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cfg.source}: bad solver option: {exc}") from exc
    prob = build_problem(cfg)
    t1 = time.perf_counter()
    try:
        code = _RUNNERS[cfg.task](prob, cfg, scfg, w, report)
        report["status"] = "ok" if code == 0 else ("violation" if code == 2 else "failure")
    except ConfigError:
        raise
    except VarExpError as exc:
        report["status"] = "failure"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        partial = getattr(exc, "report", None)
        if partial is not None:
            report["solve"] = partial.summary()
            report["solve"]["trace_file"] = w.trace("trace.csv", partial.trace)
        log.error("%s: %s", type(exc).__name__, exc)
        code = 1
    t2 = time.perf_counter()
    if timings:
        w.json("timings.json", {"setup_s": t1 - t0, "task_s": t2 - t1, "total_s": t2 - t0})
        w.files.append({"file": "timings.json", "kind": "timings", "columns": []})
    log.info("task %s finished in %.3f s", cfg.task, t2 - t0)
    report["exit_code"] = code
    report["files"] = w.files
    w.json("run_report.json", report)
    return code


def main(argv=None):
    level = os.environ.get("VAREXP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="varexp-solve", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("run", help="run one experiment from a YAML config")
    pr.add_argument("config")
    pr.add_argument("--out", help="output directory (overrides the config)")
    pr.add_argument("--seed", type=int, help="random seed (overrides the config)")
    pr.add_argument("--task", choices=TASKS, help="task (overrides the config)")
    pr.add_argument("--timings", action="store_true", help="also write wall-clock timings.json")
    args = parser.parse_args(argv)
    try:
        return run(args.config, args.out, args.seed, args.task, args.timings)
    except (ConfigError, ValueError, ArithmeticError) as exc:
        print(f"varexp-solve: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
