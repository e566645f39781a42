"""Flat ``key = value`` run configuration.

A document is a list of ``key = value`` lines, optionally grouped under
``[section]`` headers (``run``, ``model``, ``solver``, ``experiment``);
sections are only for readability, every key name is global.  ``#`` and
``;`` start comments.  List-valued keys take comma-separated scalars.

Errors name the line and the key, e.g. ``line 4: P: P >= 2*(M+1) violated``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import DRIFTS, SolverConfig
from .potential import PotentialSpec

EXPERIMENTS = ("simulate", "sample-measure", "invariant-convergence", "reflection", "semigroup",
               "strong-feller", "control", "mixing", "energy")
SECTIONS = ("run", "model", "solver", "experiment")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based or None for missing keys."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line is not None else ""
        what = f"{key}: " if key else ""
        super().__init__(f"{where}{what}{message}")
        self.line = line
        self.key = key


def _int(s):
    v = float(s)
    if not v.is_integer():
        raise ValueError("expected an integer")
    return int(v)


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("expected a finite number")
    return v


def _list(conv):
    def parse(s):
        items = [x.strip() for x in s.split(",") if x.strip()]
        if not items:
            raise ValueError("expected a nonempty comma-separated list")
        return [conv(x) for x in items]
    return parse


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


# key -> (parser, default); a default of ``None`` marks a required key
SCHEMA = {
    # run
    "experiment": (_choice(*EXPERIMENTS), None),
    "seed": (_int, None),
    "output_dir": (str, "./out"),
    # model
    "lambda": (_float, None),
    "n": (_int, None),
    "c": (_float, None),
    "delta": (_float, 0.5),
    "eps_clip": (_float, 1e-12),
    # solver
    "M": (_int, None),
    "P": (_int, None),
    "dt": (_float, None),
    "T": (_float, None),
    "burn_in": (_float, 0.0),
    "drift": (_choice(*DRIFTS), "poly"),
    "noise_scale": (_float, 1.0),
    "x_max": (_float, 1.2),
    "stability_margin": (_float, 1.0),
    "max_substep_level": (_int, 12),
    "chunk_size": (_int, 64),
    # experiment options
    "init": (_choice("mean", "mu_c", "mode"), "mu_c"),
    "init_mode": (_int, 1),
    "init_amplitude": (_float, 0.0),
    "record_every": (_int, 1),
    "kind": (_choice("mu_c", "nu_n", "nu_limit"), "nu_n"),
    "count": (_int, 10_000),
    "keep": (_int, 1000),
    "ensemble": (_int, 32),
    "n_list": (_list(_int), [2, 4, 8]),
    "exceed_level": (_float, 1.0),
    "windows": (_int, 4),
    "pairs": (_int, 5),
    "pair_modes": (_int, 4),
    "q_order": (_int, 4),
    "x_coeffs": (_list(_float), [0.0, 0.4, 0.0, 0.1]),
    "y_coeffs": (_list(_float), [0.0, -0.3, 0.2]),
    "P_list": (_list(_int), [8, 16, 32, 64, 128]),
    "noise_scales": (_list(_float), [0.0, 0.01, 0.05]),
    "residual_floor": (_float, 1e-10),
    "lag_max": (_float, 2.0),
    "lag_fine_until": (_float, 0.2),
    "lag_fine_step": (_float, 0.0025),
    "lag_coarse_step": (_float, 0.05),
    "reference_count": (_int, 200_000),
    "tanh_gain": (_float, 2.0),
}

REQUIRED = tuple(k for k, (_, d) in SCHEMA.items() if d is None)


@dataclass
class RunConfig:
    """Validated run description."""

    experiment: str
    solver: SolverConfig
    options: dict
    output_dir: str
    master_seed: int
    lines: dict = field(default_factory=dict)      # key -> line number
    raw: dict = field(default_factory=dict)        # key -> text as written

    @property
    def spec(self) -> PotentialSpec:
        return self.solver.spec

    def echo(self) -> dict:
        """All resolved values (defaults included), for run metadata."""
        out = {"experiment": self.experiment, "seed": self.master_seed,
               "output_dir": self.output_dir}
        s = self.solver
        out.update({"lambda": s.spec.lam, "n": s.spec.n, "c": s.c, "delta": s.spec.delta,
                    "eps_clip": s.spec.eps_clip, "M": s.M, "P": s.P, "dt": s.dt, "T": s.T,
                    "burn_in": s.burn_in, "drift": s.drift, "noise_scale": s.noise_scale,
                    "x_max": s.x_max, "stability_margin": s.stability_margin,
                    "max_substep_level": s.max_substep_level})
        out.update(self.options)
        return out


def _tokenize(text: str):
    """Yield ``(line_no, key, value)``; raises on malformed lines."""
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not s:
            continue
        if s.startswith("["):
            if not s.endswith("]") or s[1:-1].strip() not in SECTIONS:
                raise ConfigError(f"unknown section {s!r} (allowed: {', '.join(SECTIONS)})", no)
            continue
        if "=" not in s:
            raise ConfigError("expected 'key = value'", no)
        key, value = (p.strip() for p in s.split("=", 1))
        if not key:
            raise ConfigError("empty key", no)
        yield no, key, value


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document.

    Raises :class:`ConfigError` on the first unknown or duplicate key,
    malformed value, missing required key or violated constraint.
    """
    vals, lines, raw = {}, {}, {}
    for no, key, value in _tokenize(text):
        if key not in SCHEMA:
            raise ConfigError("unknown key", no, key)
        if key in vals:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", no, key)
        try:
            vals[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"invalid value {value!r}: {exc}", no, key) from None
        lines[key] = no
        raw[key] = value
    for key in REQUIRED:
        if key not in vals:
            raise ConfigError("missing required key", None, key)
    for key, (_, default) in SCHEMA.items():
        vals.setdefault(key, default)

    def fail(key, msg):
        raise ConfigError(msg, lines.get(key), key)

    v = vals
    checks = [
        ("M", v["M"] >= 1, "M >= 1 violated"),
        ("P", v["P"] >= 2 * (v["M"] + 1), f"P >= 2*(M+1) violated (P={v['P']}, M={v['M']})"),
        ("dt", v["dt"] > 0, "dt > 0 violated"),
        ("T", v["T"] >= 0, "T >= 0 violated"),
        ("burn_in", v["burn_in"] >= 0, "burn_in >= 0 violated"),
        ("n", v["n"] >= 0, "n >= 0 violated"),
        ("c", -1 < v["c"] < 1, "-1 < c < 1 violated"),
        ("delta", 0 < v["delta"] < 1, "0 < delta < 1 violated"),
        ("eps_clip", 0 < v["eps_clip"] <= 1e-3, "0 < eps_clip <= 1e-3 violated"),
        ("noise_scale", v["noise_scale"] >= 0, "noise_scale >= 0 violated"),
        ("stability_margin", v["stability_margin"] > 0, "stability_margin > 0 violated"),
        ("max_substep_level", 0 <= v["max_substep_level"] <= 20,
         "0 <= max_substep_level <= 20 violated"),
        ("chunk_size", v["chunk_size"] >= 1, "chunk_size >= 1 violated"),
        ("record_every", v["record_every"] >= 1, "record_every >= 1 violated"),
        ("count", v["count"] >= 2, "count >= 2 violated"),
        ("ensemble", v["ensemble"] >= 2, "ensemble >= 2 violated"),
        ("windows", v["windows"] >= 1, "windows >= 1 violated"),
        ("pairs", v["pairs"] >= 1, "pairs >= 1 violated"),
        ("q_order", 1 <= v["q_order"] <= v["M"], "1 <= q_order <= M violated"),
        ("n_list", all(b > a for a, b in zip(v["n_list"], v["n_list"][1:]))
         and min(v["n_list"]) >= 0, "n_list must be increasing and nonnegative"),
        ("P_list", all(b > a for a, b in zip(v["P_list"], v["P_list"][1:])),
         "P_list must be increasing"),
        ("noise_scales", min(v["noise_scales"]) >= 0, "noise_scales must be nonnegative"),
        ("init_mode", 0 <= v["init_mode"] <= v["M"], "0 <= init_mode <= M violated"),
        ("lag_max", v["lag_max"] > 0, "lag_max > 0 violated"),
    ]
    for key, ok, msg in checks:
        if not ok:
            fail(key, msg)
    for key in ("T", "burn_in"):
        k = v[key] / v["dt"]
        if abs(k - round(k)) > 1e-6 * max(1.0, k):
            fail(key, f"{key} must be a multiple of dt")
    try:
        spec = PotentialSpec(lam=v["lambda"], n=v["n"], eps_clip=v["eps_clip"], delta=v["delta"])
        solver = SolverConfig(M=v["M"], P=v["P"], dt=v["dt"], T=v["T"], spec=spec, c=v["c"],
                              burn_in=v["burn_in"], seed=v["seed"], drift=v["drift"],
                              noise_scale=v["noise_scale"], x_max=v["x_max"],
                              stability_margin=v["stability_margin"],
                              max_substep_level=v["max_substep_level"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    core = {"experiment", "seed", "output_dir", "lambda", "n", "c", "delta", "eps_clip", "M", "P",
            "dt", "T", "burn_in", "drift", "noise_scale", "x_max", "stability_margin",
            "max_substep_level"}
    options = {k: val for k, val in v.items() if k not in core}
    return RunConfig(v["experiment"], solver, options, v["output_dir"], v["seed"], lines, raw)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
