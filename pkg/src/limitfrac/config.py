"""Run configuration: flat key = value files.

One assignment per line, ``#`` starts a comment, blank lines ignored.
Unknown keys are rejected with their line number. Values the file does
not set fall back to the common defaults (tolerances 1e-7, L-scheme
constants and outer tolerance 1e-6, penalty 1e4, kappa and xi tied to
the minimum cell diameter through kappa_scale / xi_scale), then to the
selected example preset.

run.example is required; it selects geometry, loading and the preset
parameter values that a study varies.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dataclass_fields

from .errors import ConfigError

_EXAMPLES = ("ex1", "ex2", "ex3", "ex4")


@dataclass
class Config:
    """Fully-typed configuration; None marks fields left to the preset."""

    example: str = ""
    n_global: int | None = None
    refine_box: tuple | None = None   # (x0, y0, x1, y1, levels)
    slit: tuple | None = None         # (x0, y0, x1, y1)
    mu: float | None = None
    alpha: float | None = None
    beta: float | None = None
    Gc: float | None = None
    kappa_scale: float = 1.0e-10
    xi_scale: float = 2.0
    gamma: float = 1.0e4
    eps_phi: float = 1.0e-7
    eps_pf: float = 1.0e-7
    tol_outer: float = 1.0e-6
    L_phi: float = 1.0e-6
    L_pf: float = 1.0e-6
    max_newton: int = 50
    max_staggered: int = 200
    dt: float | None = None
    n_steps: int | None = None
    c: float | None = None
    explicit: frozenset = frozenset()


_FLOAT_KEYS = {
    "model.mu": "mu", "model.alpha": "alpha", "model.beta": "beta",
    "model.Gc": "Gc",
    "pf.kappa_scale": "kappa_scale", "pf.xi_scale": "xi_scale",
    "pf.gamma": "gamma",
    "solver.eps_phi": "eps_phi", "solver.eps_pf": "eps_pf",
    "solver.tol_outer": "tol_outer",
    "solver.L_phi": "L_phi", "solver.L_pf": "L_pf",
    "run.dt": "dt", "run.c": "c",
}
_INT_KEYS = {
    "mesh.n_global": "n_global",
    "solver.max_newton": "max_newton",
    "solver.max_staggered": "max_staggered",
    "run.n_steps": "n_steps",
}
_KEY_TO_FIELD = dict(_FLOAT_KEYS)
_KEY_TO_FIELD.update(_INT_KEYS)
_KEY_TO_FIELD.update({"mesh.refine_box": "refine_box", "mesh.slit": "slit",
                      "run.example": "example"})
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


def _parse_scalar(key, raw, line_no):
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError("line %d: non-numeric value %r for key %r"
                          % (line_no, raw, key)) from None


def _parse_tuple(key, raw, line_no, count):
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != count:
        raise ConfigError("line %d: key %r expects %d numbers, got %d"
                          % (line_no, key, count, len(parts)))
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError("line %d: non-numeric value in %r" % (line_no, key)) from None
    if key == "mesh.refine_box":
        levels = vals[4]
        if levels != int(levels) or levels < 1:
            raise ConfigError("line %d: refine_box levels must be a positive "
                              "integer" % line_no)
        return (vals[0], vals[1], vals[2], vals[3], int(levels))
    return tuple(vals)


def parse_config_text(text: str, origin: str = "<config>") -> Config:
    """Parse configuration text; raises ConfigError with line numbers."""
    assignments = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("line %d: expected 'key = value', got %r"
                              % (line_no, line.strip()))
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _KEY_TO_FIELD:
            raise ConfigError("line %d: unknown key %r" % (line_no, key))
        if key in assignments:
            raise ConfigError("line %d: duplicate key %r (first set on line %d)"
                              % (line_no, key, assignments[key][1]))
        assignments[key] = (raw, line_no)

    cfg = Config()
    explicit = set()
    for key, (raw, line_no) in assignments.items():
        field_name = _KEY_TO_FIELD[key]
        if key == "run.example":
            value = raw
        elif key == "mesh.refine_box":
            value = _parse_tuple(key, raw, line_no, 5)
        elif key == "mesh.slit":
            value = _parse_tuple(key, raw, line_no, 4)
        else:
            value = _parse_scalar(key, raw, line_no)
        setattr(cfg, field_name, value)
        explicit.add(field_name)
    cfg.explicit = frozenset(explicit)

    _validate(cfg, assignments, origin)
    return cfg


def parse_config(path) -> Config:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as err:
        raise ConfigError("cannot read config %s: %s" % (path, err)) from None
    return parse_config_text(text, origin=str(path))


def _line_of(assignments, key):
    return assignments[key][1] if key in assignments else 0


def _validate(cfg, assignments, origin):
    if not cfg.example:
        raise ConfigError("%s: missing required key run.example" % origin)
    if cfg.example not in _EXAMPLES:
        raise ConfigError("line %d: run.example must be one of %s, got %r"
                          % (_line_of(assignments, "run.example"),
                             "/".join(_EXAMPLES), cfg.example))
    positive = ["mu", "Gc", "alpha", "xi_scale", "gamma", "eps_phi", "eps_pf",
                "tol_outer", "dt"]
    for name in positive:
        value = getattr(cfg, name)
        if value is not None and name in cfg.explicit and value <= 0:
            raise ConfigError("line %d: %s must be positive, got %g"
                              % (_line_of(assignments, _FIELD_TO_KEY[name]),
                                 name, value))
    if cfg.beta is not None and cfg.beta < 0:
        raise ConfigError("line %d: model.beta must be nonnegative, got %g"
                          % (_line_of(assignments, "model.beta"), cfg.beta))
    if cfg.c is not None and cfg.c < 0:
        raise ConfigError("line %d: run.c must be nonnegative, got %g"
                          % (_line_of(assignments, "run.c"), cfg.c))
    if cfg.n_global is not None and cfg.n_global < 0:
        raise ConfigError("line %d: mesh.n_global must be nonnegative"
                          % _line_of(assignments, "mesh.n_global"))
    for name in ("L_phi", "L_pf", "kappa_scale"):
        if getattr(cfg, name) < 0:
            raise ConfigError("line %d: %s must be nonnegative"
                              % (_line_of(assignments, _FIELD_TO_KEY[name]), name))
    for name in ("max_newton", "max_staggered"):
        if getattr(cfg, name) < 1:
            raise ConfigError("line %d: %s must be at least 1"
                              % (_line_of(assignments, _FIELD_TO_KEY[name]), name))
    if cfg.n_steps is not None and cfg.n_steps < 1:
        raise ConfigError("line %d: run.n_steps must be at least 1"
                          % _line_of(assignments, "run.n_steps"))


def apply_overrides(cfg: Config, overrides) -> Config:
    """Apply key=value strings (CLI --set) on top of a parsed config."""
    override_lines = []
    overridden = set()
    for item in overrides:
        if "=" not in item:
            raise ConfigError("override %r is not of the form key=value" % item)
        override_lines.append(item)
        overridden.add(item.split("=", 1)[0].strip())
    lines = []
    if "run.example" not in overridden:
        lines.append("run.example = %s" % cfg.example)
    for name in cfg.explicit:
        key = _FIELD_TO_KEY[name]
        if name == "example" or key in overridden:
            continue
        lines.append("%s = %s" % (key, _format_value(getattr(cfg, name))))
    return parse_config_text("\n".join(lines + override_lines), origin="<overrides>")


def _format_value(value):
    if isinstance(value, tuple):
        return " ".join(_format_value(v) for v in value)
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def resolved_echo(cfg: Config, extras=None) -> str:
    """Text of the fully-resolved configuration.

    Re-parsing the echo reproduces every value byte for byte, making a
    recorded run replayable. Fields still unset (left to the example
    preset at run construction) are echoed as comments.
    """
    lines = ["# resolved configuration"]
    order = [f.name for f in dataclass_fields(Config) if f.name != "explicit"]
    for name in order:
        key = _FIELD_TO_KEY[name]
        value = getattr(cfg, name)
        if value is None:
            lines.append("# %s left to preset" % key)
        elif name == "example":
            lines.append("%s = %s" % (key, value))
        else:
            lines.append("%s = %s" % (key, _format_value(value)))
    for comment in extras or ():
        lines.append("# %s" % comment)
    return "\n".join(lines) + "\n"
