"""Batch front door: config parsing, experiment dispatch, artifact emission.

One experiment per invocation.  A run reads a flat INI-style config
(sections per module, key=value entries, no nesting), executes its
subcommand, and writes every artifact under the output directory:
CSV tables, PNG figures, PGM images for restoration runs, a summary
text block, and a manifest listing the resolved parameters plus a
sha256 per artifact.  Exit codes: 0 all checks passed (or nothing to
check), 1 at least one check failed, 2 configuration or runtime errors.

Determinism contract: identical config and seed give byte-identical
artifacts, so manifests can be compared across runs and thread counts.
"""

import argparse
import configparser
import csv
import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import figures
from .errors import ConfigError, ToolkitError
from .exponent import ExponentField, choose_q, exponent_expression
from .grid import Grid, GridFunction
from .harness import (
    check_viscosity_supersolution,
    check_weak_supersolution,
    comparison_shrinking_scan,
    default_battery,
    pipeline_viscosity_to_weak,
)
from .infconv import monotone_family_check, semiconcavity_check
from .lebesgue import check_modular_norm_relations, luxemburg_norm, modular, sobolev_norm
from .report import CheckReport
from .restoration import build_exponent_from_image, evolve_flow, read_pgm, write_pgm
from .solver import solve_fixed_point, solve_variational
from .sources import source_preset, validate_growth

__all__ = ["ExperimentConfig", "parse_config", "run", "main"]

COMMANDS = (
    "norm",
    "infconv",
    "solve",
    "check-weak",
    "check-viscosity",
    "pipeline",
    "compare",
    "denoise",
)

_REQUIRED = object()

# typed schema per fixed-key section; preset sections are validated by
# their builders, which reject unknown parameters themselves
_SCHEMAS = {
    "run": {"command": ("str", None), "seed": ("int", 0)},
    "grid": {"bounds": ("str", _REQUIRED), "nodes": ("str", _REQUIRED)},
    "norm": {"tol": ("float", 1e-10)},
    "infconv": {"epsilons": ("floats", _REQUIRED), "q": ("str", "auto")},
    "solve": {
        "tol": ("float", 1e-8),
        "delta": ("float", 0.0),
        "max_iter": ("int", 20000),
        "omega": ("float", 0.5),
        "max_outer": ("int", 60),
        "fixed_point_tol": ("float", 1e-8),
    },
    "check": {
        "side": ("str", "both"),
        "tolerance": ("str", "auto"),
        "battery_per_axis": ("int", 3),
    },
    "pipeline": {
        "epsilons": ("floats", _REQUIRED),
        "q": ("str", "auto"),
        "battery_per_axis": ("int", 2),
    },
    "compare": {
        "n_boxes": ("int", 4),
        "shrink": ("float", 0.7),
        "start_fraction": ("float", 0.95),
        "grad_floor": ("float", 1e-9),
        "battery_per_axis": ("int", 2),
    },
    "denoise": {
        "input": ("str", _REQUIRED),
        "sigma": ("float", 1.2),
        "k": ("float", 6.0),
        "beta": ("float", 1.0),
        "dt": ("float", 0.2),
        "steps": ("int", 100),
        "dirichlet": ("bool", False),
    },
}

_PRESET_SECTIONS = ("exponent", "source", "boundary", "function", "function_v")

_NEEDS = {
    "norm": ({"grid", "exponent", "function"}, {"norm"}),
    "infconv": ({"grid", "function", "infconv"}, {"exponent"}),
    "solve": ({"grid", "exponent", "source", "boundary", "solve"}, set()),
    "check-weak": ({"grid", "exponent", "source", "function", "check"}, {"boundary", "solve"}),
    "check-viscosity": (
        {"grid", "exponent", "source", "function", "check"},
        {"boundary", "solve"},
    ),
    "pipeline": (
        {"grid", "exponent", "source", "function", "pipeline"},
        {"boundary", "solve"},
    ),
    "compare": (
        {"grid", "exponent", "source", "function", "function_v", "compare"},
        {"boundary", "solve"},
    ),
    "denoise": ({"denoise"}, set()),
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    seed: int
    config_path: Path
    outdir: Path
    sections: dict = field(repr=False)
    config_bytes: bytes = field(repr=False)

    def section(self, name):
        return self.sections.get(name, {})

    def value(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)


def _parse_typed(section, key, kind, raw):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind == "floats":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        return raw
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind}") from None


def _parse_free(raw):
    """Preset parameter: float, comma vector of floats, or bare string."""
    raw = raw.strip()
    if "," in raw:
        try:
            return tuple(float(tok) for tok in raw.split(","))
        except ValueError:
            return raw
    try:
        return float(raw)
    except ValueError:
        return raw


def _validate_numbers(command, sections):
    def bad(sec, key, why):
        raise ConfigError(f"[{sec}] {key} {why}")

    for sec in ("norm", "solve"):
        if sec in sections and sections[sec]["tol"] <= 0:
            bad(sec, "tol", "must be > 0")
    if "solve" in sections:
        s = sections["solve"]
        if s["delta"] < 0:
            bad("solve", "delta", "must be >= 0")
        if s["max_iter"] < 1:
            bad("solve", "max_iter", "must be >= 1")
        if s["max_outer"] < 1:
            bad("solve", "max_outer", "must be >= 1")
        if not 0.0 < s["omega"] <= 1.0:
            bad("solve", "omega", "must lie in (0, 1]")
        if s["fixed_point_tol"] <= 0:
            bad("solve", "fixed_point_tol", "must be > 0")
    for sec in ("infconv", "pipeline"):
        if sec not in sections:
            continue
        eps = sections[sec]["epsilons"]
        if len(eps) < 2 or min(eps) <= 0 or any(b >= a for a, b in zip(eps, eps[1:])):
            bad(sec, "epsilons", "must be a strictly decreasing positive list")
        q = sections[sec]["q"]
        if q != "auto":
            try:
                qv = float(q)
            except ValueError:
                bad(sec, "q", "must be 'auto' or a number >= 2")
            if qv < 2:
                bad(sec, "q", "must be >= 2")
    if "check" in sections:
        c = sections["check"]
        if c["side"] not in ("super", "sub", "both"):
            bad("check", "side", "must be super, sub, or both")
        if c["battery_per_axis"] < 1:
            bad("check", "battery_per_axis", "must be >= 1")
        if c["tolerance"] != "auto":
            try:
                tv = float(c["tolerance"])
            except ValueError:
                bad("check", "tolerance", "must be 'auto' or a positive number")
            if tv <= 0:
                bad("check", "tolerance", "must be > 0")
    if "compare" in sections:
        c = sections["compare"]
        if c["n_boxes"] < 1:
            bad("compare", "n_boxes", "must be >= 1")
        if not 0.0 < c["shrink"] < 1.0:
            bad("compare", "shrink", "must lie in (0, 1)")
        if not 0.0 < c["start_fraction"] <= 1.0:
            bad("compare", "start_fraction", "must lie in (0, 1]")
    if "denoise" in sections:
        d = sections["denoise"]
        if d["sigma"] < 0:
            bad("denoise", "sigma", "must be >= 0")
        if d["k"] <= 0:
            bad("denoise", "k", "must be > 0")
        if d["beta"] <= 0:
            bad("denoise", "beta", "must be > 0")
        if d["dt"] <= 0:
            bad("denoise", "dt", "must be > 0")
        if d["steps"] < 1:
            bad("denoise", "steps", "must be >= 1")


def parse_config(path, command, outdir, overrides=()):
    """Load, override, and validate a run configuration.

    `overrides` are "section.key=value" strings applied before
    validation.  Unknown sections, unknown keys, and out-of-range values
    raise ConfigError naming the offender.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    config_bytes = path.read_bytes()
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read_string(config_bytes.decode("utf-8"), source=str(path))
    except (UnicodeDecodeError, configparser.Error) as err:
        raise ConfigError(f"{path}: {err}") from None

    raw = {sec: dict(parser.items(sec)) for sec in parser.sections()}
    for entry in overrides:
        if "=" not in entry or "." not in entry.split("=", 1)[0]:
            raise ConfigError(f"override {entry!r} is not of the form section.key=value")
        target, value = entry.split("=", 1)
        sec, key = target.split(".", 1)
        raw.setdefault(sec.strip(), {})[key.strip()] = value

    required, optional = _NEEDS[command]
    allowed = required | optional | {"run"}
    for sec in raw:
        if sec not in allowed:
            raise ConfigError(f"section [{sec}] is not used by command {command!r}")
    for sec in sorted(required - set(raw)):
        raise ConfigError(f"command {command!r} needs a [{sec}] section")

    sections = {}
    for sec, entries in raw.items():
        if sec in _SCHEMAS:
            schema = _SCHEMAS[sec]
            parsed = {}
            for key, value in entries.items():
                if key not in schema:
                    raise ConfigError(f"[{sec}] has no key {key!r}")
                parsed[key] = _parse_typed(sec, key, schema[key][0], value)
            for key, (kind, default) in schema.items():
                if key in parsed:
                    continue
                if default is _REQUIRED:
                    raise ConfigError(f"[{sec}] is missing required key {key!r}")
                parsed[key] = default
            sections[sec] = parsed
        elif sec in _PRESET_SECTIONS:
            if "preset" not in entries:
                raise ConfigError(f"[{sec}] is missing required key 'preset'")
            parsed = {"preset": entries["preset"].strip()}
            for key, value in entries.items():
                if key != "preset":
                    parsed[key] = _parse_free(value)
            sections[sec] = parsed
        else:  # pragma: no cover - guarded by the allowed-set check above
            raise ConfigError(f"unknown section [{sec}]")

    declared = sections.get("run", {}).get("command")
    if declared is not None and declared != command:
        raise ConfigError(
            f"config declares command {declared!r} but {command!r} was invoked"
        )
    _validate_numbers(command, sections)
    seed = int(sections.get("run", {}).get("seed", 0))
    if seed < 0:
        raise ConfigError("[run] seed must be >= 0")
    return ExperimentConfig(
        command=command,
        seed=seed,
        config_path=path,
        outdir=Path(outdir),
        sections=sections,
        config_bytes=config_bytes,
    )


# ----------------------------------------------------------------------
# builders


def _wrap(section, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ToolkitError as err:
        raise ConfigError(f"[{section}] {err}") from None


def _build_grid(cfg):
    sec = cfg.section("grid")
    try:
        pairs = []
        for part in sec["bounds"].split(";"):
            lo, hi = (float(tok) for tok in part.split(","))
            pairs.append((lo, hi))
        shape = tuple(int(tok) for tok in sec["nodes"].split(","))
    except ValueError:
        raise ConfigError(
            "[grid] bounds must look like 'lo,hi' or 'lo,hi;lo,hi' and nodes like '65' or '65,65'"
        ) from None
    if len(shape) != len(pairs):
        raise ConfigError("[grid] bounds and nodes disagree on the dimension")
    return _wrap("grid", Grid.from_shape, tuple(pairs), shape)


def _build_exponent(cfg, grid):
    sec = dict(cfg.section("exponent"))
    preset = sec.pop("preset")
    if preset == "sine-bump":
        sec.setdefault("lo", tuple(lo for lo, _ in grid.bounds))
        sec.setdefault("hi", tuple(hi for _, hi in grid.bounds))
    expr = _wrap("exponent", exponent_expression, preset, sec)
    vals = np.broadcast_to(np.asarray(expr(grid.nodes()), dtype=float), grid.shape).copy()
    return _wrap("exponent", ExponentField.from_values, grid, vals)


def _build_source(cfg, grid):
    sec = dict(cfg.section("source"))
    preset = sec.pop("preset")
    int_keys = {"frequency"}
    params = {k: int(v) if k in int_keys else v for k, v in sec.items()}
    return _wrap("source", source_preset, preset, grid=grid, **params)


def _build_boundary(cfg, grid):
    sec = dict(cfg.section("boundary") or {"preset": "zero"})
    preset = sec.pop("preset")
    if preset == "zero":
        extra = sorted(sec)
        if extra:
            raise ConfigError(f"[boundary] unknown parameters for 'zero': {extra}")
        return 0.0
    if preset == "constant":
        value = float(sec.pop("value", 0.0))
        if sec:
            raise ConfigError(f"[boundary] unknown parameters for 'constant': {sorted(sec)}")
        return value
    if preset == "affine":
        a = float(sec.pop("a", 0.0))
        b = np.atleast_1d(np.asarray(sec.pop("b", 1.0), dtype=float))
        if sec:
            raise ConfigError(f"[boundary] unknown parameters for 'affine': {sorted(sec)}")
        if b.shape not in ((1,), (grid.ndim,)):
            raise ConfigError(f"[boundary] affine slope has {b.size} entries for a {grid.ndim}D grid")
        return lambda x: a + np.sum(b * x, axis=-1)
    raise ConfigError(f"[boundary] unknown preset {preset!r}")


def _random_lipschitz(grid, target, modes, rng):
    """Random smooth field rescaled so its axis difference quotients peak at `target`."""
    vals = np.zeros(grid.shape)
    for k in range(1, modes + 1):
        amp = rng.normal() / k
        term = np.ones(grid.shape)
        for a, (lo, hi) in enumerate(grid.bounds):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            t = (grid.axis_nodes(a) - lo) / (hi - lo)
            factor = np.sin(np.pi * k * t + phase)
            term = term * factor.reshape([-1 if ax == a else 1 for ax in range(grid.ndim)])
        vals += amp * term
    gf = GridFunction(grid, vals)
    lip = gf.lipschitz_constant()
    if lip == 0.0:
        vals = target * grid.nodes()[..., 0]
        return GridFunction(grid, vals)
    return GridFunction(grid, vals * (target / lip))


def _build_function(cfg, grid, section="function"):
    sec = dict(cfg.section(section))
    preset = sec.pop("preset")
    center_default = np.array([(lo + hi) / 2 for lo, hi in grid.bounds])

    def takes(name, default):
        return sec.pop(name, default)

    if preset == "parabola":
        offset = float(takes("offset", 1.0))
        scale = float(takes("scale", 1.0))
        center = np.atleast_1d(np.asarray(takes("center", center_default), dtype=float))
        out = GridFunction.from_callable(
            grid, lambda x: offset - scale * np.sum((x - center) ** 2, axis=-1)
        )
    elif preset == "abs":
        scale = float(takes("scale", 1.0))
        center = np.atleast_1d(np.asarray(takes("center", center_default), dtype=float))
        out = GridFunction.from_callable(
            grid, lambda x: scale * np.sqrt(np.sum((x - center) ** 2, axis=-1))
        )
    elif preset == "negabs":
        scale = float(takes("scale", 1.0))
        center = np.atleast_1d(np.asarray(takes("center", center_default), dtype=float))
        out = GridFunction.from_callable(
            grid, lambda x: -scale * np.sqrt(np.sum((x - center) ** 2, axis=-1))
        )
    elif preset == "sine":
        amp = float(takes("amplitude", 1.0))
        freq = int(float(takes("frequency", 1)))
        offset = float(takes("offset", 0.0))

        def fn(x):
            out = np.full(x.shape[:-1], amp)
            for a, (lo, hi) in enumerate(grid.bounds):
                out = out * np.sin(freq * np.pi * (x[..., a] - lo) / (hi - lo))
            return offset + out

        out = GridFunction.from_callable(grid, fn)
    elif preset == "random-lipschitz":
        target = float(takes("lipschitz", 1.0))
        modes = int(float(takes("modes", 4)))
        if target <= 0 or modes < 1:
            raise ConfigError(f"[{section}] random-lipschitz needs lipschitz > 0 and modes >= 1")
        out = _random_lipschitz(grid, target, modes, np.random.default_rng(cfg.seed))
    elif preset == "solve":
        if sec:
            raise ConfigError(f"[{section}] unknown parameters for 'solve': {sorted(sec)}")
        out = _solve_for(cfg, grid).u
        sec = {}
    else:
        raise ConfigError(f"[{section}] unknown function preset {preset!r}")
    if sec:
        raise ConfigError(f"[{section}] unknown parameters for {preset!r}: {sorted(sec)}")
    return out


def _solve_for(cfg, grid):
    p = _build_exponent(cfg, grid)
    f = _build_source(cfg, grid)
    g = _build_boundary(cfg, grid)
    sol = cfg.section("solve") or {k: d for k, (_, d) in _SCHEMAS["solve"].items()}
    if f.x_only:
        fvals = GridFunction(grid, f.sample(grid, GridFunction(grid, np.zeros(grid.shape))).reshape(grid.shape))
        return solve_variational(
            p, g, fvals, tol=sol["tol"], delta=sol["delta"], max_iter=sol["max_iter"]
        )
    return solve_fixed_point(
        p,
        g,
        f,
        tol=sol["fixed_point_tol"],
        inner_tol=sol["tol"],
        relaxation=sol["omega"],
        max_outer=sol["max_outer"],
        delta=sol["delta"],
        max_iter=sol["max_iter"],
    )


# ----------------------------------------------------------------------
# artifact plumbing


class _Emitter:
    """Collects artifacts in the output directory and writes the manifest."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.outdir = cfg.outdir
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.artifacts = []
        self.summary_lines = []

    def path(self, name):
        return self.outdir / name

    def register(self, name):
        self.artifacts.append(name)
        return self.path(name)

    def write_csv(self, name, rows):
        with open(self.register(name), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in rows:
                writer.writerow([_csv_cell(v) for v in row])

    def write_report_csv(self, name, report):
        self.write_csv(name, report.to_csv_rows())

    def say(self, text=""):
        self.summary_lines.append(text)

    def say_report(self, report):
        self.say(report.to_text(max_items=40))
        self.say()

    def finish(self):
        summary = "\n".join(self.summary_lines).rstrip() + "\n"
        with open(self.register("summary.txt"), "w") as fh:
            fh.write(summary)
        lines = []
        lines.append(f"command={self.cfg.command}")
        lines.append(f"seed={self.cfg.seed}")
        lines.append(f"config_sha256={hashlib.sha256(self.cfg.config_bytes).hexdigest()}")
        for sec in sorted(self.cfg.sections):
            for key in sorted(self.cfg.sections[sec]):
                lines.append(f"param.{sec}.{key}={_canonical(self.cfg.sections[sec][key])}")
        for name in sorted(self.artifacts):
            digest = hashlib.sha256((self.outdir / name).read_bytes()).hexdigest()
            lines.append(f"artifact.{name}={digest}")
        with open(self.outdir / "manifest.txt", "w") as fh:
            fh.write("\n".join(sorted(lines)) + "\n")
        sys.stdout.write(summary)


def _csv_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _canonical(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_canonical(x) for x in v)
    return str(v)


def _exit_code(reports):
    return 0 if all(r.all_passed for r in reports) else 1


# ----------------------------------------------------------------------
# subcommand implementations


def _cmd_norm(cfg, em):
    grid = _build_grid(cfg)
    p = _build_exponent(cfg, grid)
    u = _build_function(cfg, grid)
    tol = cfg.value("norm", "tol", 1e-10)
    rho = modular(u, p)
    lux = luxemburg_norm(u, p, tol=tol)
    sob = sobolev_norm(u, p, tol=tol)
    report = check_modular_norm_relations(u, p, tol=tol)
    em.write_csv(
        "values.csv",
        [
            ["quantity", "value"],
            ["modular", rho],
            ["luxemburg_norm", lux],
            ["sobolev_norm", sob],
            ["p_minus", p.p_minus],
            ["p_plus", p.p_plus],
        ],
    )
    em.write_report_csv("report.csv", report)
    figures.save_field(
        em.register("field.png"), grid, u.values, f"field (Luxemburg norm {lux:.6g})"
    )
    em.say(f"modular  {rho:.12g}")
    em.say(f"luxemburg {lux:.12g}")
    em.say(f"sobolev  {sob:.12g}")
    em.say()
    em.say_report(report)
    return [report]


def _cmd_infconv(cfg, em):
    grid = _build_grid(cfg)
    u = _build_function(cfg, grid)
    sec = cfg.section("infconv")
    if sec["q"] == "auto":
        if "exponent" in cfg.sections:
            q = choose_q(_build_exponent(cfg, grid).p_minus)
        else:
            q = 2.0
    else:
        q = float(sec["q"])
    fam_rep, family = monotone_family_check(u, sec["epsilons"], q)
    reports = [fam_rep]
    rows = [["epsilon", "r_eps", "max_deviation", "lipschitz", "semiconcavity_margin"]]
    for res in family:
        semi = semiconcavity_check(res)
        reports.append(semi)
        worst = semi.worst()
        rows.append(
            [
                res.epsilon,
                res.r_eps,
                float(np.max(np.abs(res.u_eps.values - u.values))),
                res.u_eps.lipschitz_constant(),
                worst.margin if worst is not None else np.nan,
            ]
        )
    em.write_csv("family.csv", rows)
    merged = CheckReport("inf-convolution suite", fam_rep.tolerance)
    for rep in reports:
        merged.extend(rep)
    em.write_report_csv("report.csv", merged)
    overlay = ("u_eps (smallest eps)", family[-1].u_eps.values) if grid.ndim == 1 else None
    figures.save_field(em.register("infconv.png"), grid, u.values, f"inf-convolution, q={q:g}", overlay=overlay)
    for rep in reports:
        em.say_report(rep)
    return reports


def _cmd_solve(cfg, em):
    grid = _build_grid(cfg)
    outcome = _solve_for(cfg, grid)
    u = outcome.u
    rows = [["index", *(f"x{a}" for a in range(grid.ndim)), "u"]]
    coords = grid.flat_nodes()
    for i, (x, v) in enumerate(zip(coords, u.values.reshape(-1))):
        rows.append([i, *x, v])
    em.write_csv("solution.csv", rows)
    em.write_csv(
        "energy.csv",
        [["iteration", "energy"], *[[i, e] for i, e in enumerate(outcome.energy_history)]],
    )
    figures.save_field(em.register("solution.png"), grid, u.values, "solution")
    figures.save_line_plot(
        em.register("energy.png"),
        np.arange(len(outcome.energy_history)),
        [("energy", outcome.energy_history)],
        "energy descent",
        xlabel="iteration",
        ylabel="energy",
    )
    em.say(f"iterations      {outcome.iterations}")
    em.say(f"final energy    {outcome.energy_history[-1]:.12g}")
    em.say(f"gradient norm   {outcome.gradient_norm:.6g}")
    em.say(f"final residual  {outcome.final_residual:.6g}")
    if outcome.outer_history is not None:
        em.say(f"outer sweeps    {len(outcome.outer_history)}")
    return []


def _check_reports(cfg, em, checker, png_name):
    grid = _build_grid(cfg)
    p = _build_exponent(cfg, grid)
    f = _build_source(cfg, grid)
    u = _build_function(cfg, grid)
    sec = cfg.section("check")
    tol = None if sec["tolerance"] == "auto" else float(sec["tolerance"])
    sides = ("super", "sub") if sec["side"] == "both" else (sec["side"],)
    reports = []
    for side in sides:
        if checker == "weak":
            battery = default_battery(grid, per_axis=sec["battery_per_axis"])
            rep = check_weak_supersolution(
                u, p, f, battery=battery, side=side, tolerance=tol
            )
        else:
            rep = check_viscosity_supersolution(u, p, f, side=side, tolerance=tol)
        reports.append(rep)
    merged = CheckReport(f"{checker} check", reports[0].tolerance)
    for side, rep in zip(sides, reports):
        for it in rep.items:
            merged.add(f"{side}: {it.label}", it.lhs, it.rhs, tol=it.tol)
        for note in rep.notes:
            merged.note(f"{side}: {note}")
    em.write_report_csv("report.csv", merged)
    figures.save_margin_bars(em.register(png_name), merged)
    for rep in reports:
        em.say_report(rep)
    return reports


def _cmd_check_weak(cfg, em):
    return _check_reports(cfg, em, "weak", "margins.png")


def _cmd_check_viscosity(cfg, em):
    return _check_reports(cfg, em, "viscosity", "margins.png")


def _cmd_pipeline(cfg, em):
    grid = _build_grid(cfg)
    p = _build_exponent(cfg, grid)
    f = _build_source(cfg, grid)
    u = _build_function(cfg, grid)
    sec = cfg.section("pipeline")
    q = None if sec["q"] == "auto" else float(sec["q"])
    report, rows = pipeline_viscosity_to_weak(
        u, p, f, sec["epsilons"], q=q, battery_per_axis=sec["battery_per_axis"]
    )
    header = ["epsilon", "r_eps", "strong_margin", "defect", "weak_min", "sobolev_distance"]
    em.write_csv("stages.csv", [header, *[[row[k] for k in header] for row in rows]])
    em.write_report_csv("report.csv", report)
    eps = [row["epsilon"] for row in rows]
    figures.save_line_plot(
        em.register("pipeline.png"),
        eps,
        [
            ("strong margin", [row["strong_margin"] for row in rows]),
            ("sobolev distance", [row["sobolev_distance"] for row in rows]),
        ],
        "pipeline trends",
        xlabel="epsilon",
        ylabel="value",
        logx=True,
    )
    em.say_report(report)
    return [report]


def _cmd_compare(cfg, em):
    grid = _build_grid(cfg)
    p = _build_exponent(cfg, grid)
    f = _build_source(cfg, grid)
    u = _build_function(cfg, grid, "function")
    v = _build_function(cfg, grid, "function_v")
    sec = cfg.section("compare")
    report, rows = comparison_shrinking_scan(
        u,
        v,
        p,
        f,
        n_boxes=sec["n_boxes"],
        shrink=sec["shrink"],
        start_fraction=sec["start_fraction"],
        grad_floor=sec["grad_floor"],
        battery_per_axis=sec["battery_per_axis"],
    )
    em.write_csv(
        "boxes.csv",
        [
            ["fraction", "measure", "passed"],
            *[[row["fraction"], row["measure"], row["passed"]] for row in rows],
        ],
    )
    em.write_report_csv("report.csv", report)
    overlay = ("v", v.values) if grid.ndim == 1 else None
    figures.save_field(em.register("compare.png"), grid, u.values, "comparison pair", overlay=overlay)
    em.say_report(report)
    return [report]


def _cmd_denoise(cfg, em):
    sec = cfg.section("denoise")
    in_path = Path(sec["input"])
    if not in_path.is_absolute():
        in_path = cfg.config_path.parent / in_path
    image = read_pgm(in_path)
    p = build_exponent_from_image(image, sigma=sec["sigma"], k=sec["k"])
    result = evolve_flow(
        image,
        p,
        beta=sec["beta"],
        dt=sec["dt"],
        steps=sec["steps"],
        dirichlet=sec["dirichlet"],
    )
    write_pgm(em.register("restored.pgm"), result.u)
    em.write_csv(
        "energy.csv",
        [["step", "energy"], *[[i, e] for i, e in enumerate(result.energy_trace)]],
    )
    figures.save_restoration_panel(
        em.register("denoise.png"), image, result.u, result.energy_trace
    )
    drop = result.energy_trace[0] - result.energy_trace[-1]
    em.say(f"input           {in_path.name} ({image.height}x{image.width})")
    em.say(f"input sha256    {hashlib.sha256(in_path.read_bytes()).hexdigest()}")
    em.say(f"steps           {sec['steps']} at dt={sec['dt']:g}")
    em.say(f"stability dt    {result.dt_heuristic:.6g} (warned: {result.warned})")
    em.say(f"energy          {result.energy_trace[0]:.9g} -> {result.energy_trace[-1]:.9g} (drop {drop:.6g})")
    em.say(f"clamped pixels  {int(result.clamped_counts.sum())}")
    em.say(f"p range         [{p.p_minus:.4g}, {p.p_plus:.4g}]")
    return []


_DISPATCH = {
    "norm": _cmd_norm,
    "infconv": _cmd_infconv,
    "solve": _cmd_solve,
    "check-weak": _cmd_check_weak,
    "check-viscosity": _cmd_check_viscosity,
    "pipeline": _cmd_pipeline,
    "compare": _cmd_compare,
    "denoise": _cmd_denoise,
}


def run(cfg):
    """Execute a validated config; returns the process exit code."""
    em = _Emitter(cfg)
    reports = _DISPATCH[cfg.command](cfg, em)
    em.finish()
    return _exit_code(reports)


def main(argv=None):
    top = argparse.ArgumentParser(
        prog="pxlaplace",
        description="Variable-exponent p-Laplace toolkit: norms, convolutions, "
        "solvers, certification checks, and image restoration.",
    )
    sub = top.add_subparsers(dest="command", required=True, metavar="|".join(COMMANDS))
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run a '{name}' experiment from a config file")
        sp.add_argument("--config", required=True, help="INI-style run configuration")
        sp.add_argument("--output", required=True, help="directory for artifacts")
        sp.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one config entry (repeatable)",
        )
        if name == "denoise":
            for flag, key in (
                ("--beta", "beta"),
                ("--sigma", "sigma"),
                ("--k", "k"),
                ("--dt", "dt"),
                ("--steps", "steps"),
            ):
                sp.add_argument(flag, default=None, help=f"override [denoise] {key}")
            sp.add_argument(
                "--dirichlet", action="store_true", help="pin border pixels to the input"
            )
    args = top.parse_args(argv)

    overrides = list(args.set)
    if args.command == "denoise":
        for key in ("beta", "sigma", "k", "dt", "steps"):
            value = getattr(args, key)
            if value is not None:
                overrides.append(f"denoise.{key}={value}")
        if args.dirichlet:
            overrides.append("denoise.dirichlet=true")

    try:
        cfg = parse_config(args.config, args.command, args.output, overrides)
        return run(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except ToolkitError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"io error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
