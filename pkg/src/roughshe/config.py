"""Experiment configuration: sectioned ``key = value`` files plus flag overrides.

Every value has a documented default, so an empty file is a complete
configuration.  Validation collects every problem before reporting.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text):
    return [int(round(v)) for v in _floats(text)]


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return int(text)


# section -> key -> (parser, default)
SCHEMA = {
    "global": {
        "alpha": (float, 1.5),
        "seed": (int, 0),
        "out_dir": (str, "."),
        "verbosity": (int, 1),
        "workers": (int, 1),
    },
    "kernel": {
        "alpha": (float, None),
        "verify": (str, "all"),
        "tol": (float, 1e-8),
        "band_factor": (float, 4.0),
        "seed": (int, None),
    },
    "field": {
        "alpha": (float, None),
        "t": (float, 1.0),
        "N": (int, 64),
        "L": (float, 1.0),
        "replicas": (int, 100),
        "scan": (_ints, [16, 32, 64]),
        "seed": (int, None),
    },
    "solve": {
        "alpha": (float, None),
        "sigma": (str, "clip:2"),
        "N": (int, 64),
        "dt": (float, 1e-4),
        "T": (float, 0.25),
        "replicas": (int, 1),
        "coupled": (_bool, False),
        "snapshots": (_floats, []),
        "seed": (int, None),
    },
    "moments": {
        "alpha": (float, None),
        "k": (_ints, [2]),
        "t_grid": (_floats, [0.025, 0.05, 0.075, 0.1]),
        "method": (str, "feynman-kac"),
        "replicas": (int, 10000),
        "N": (int, 32),
        "dt": (float, 4e-4),
        "bm_dt": (float, 1e-3),
        "seed": (int, None),
    },
    "oscillation": {
        "alpha": (float, None),
        "t": (float, 0.05),
        "deltas": (_floats, [1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4]),
        "replicas": (int, 4),
        "budget": (_opt_int, None),
        "sigma": (str, "tanh:1"),
        "N": (int, 64),
        "dt": (float, 1e-4),
        "seed": (int, None),
    },
    "verify": {
        "only": (str, ""),
        "replicas": (_opt_int, None),
    },
}

# sections whose experiments need the rough range 1 < alpha < 2
ROUGH_SECTIONS = ("field", "solve", "moments", "oscillation")


@dataclass
class ExperimentConfig:
    sections: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        """Values for ``name`` with ``alpha`` and ``seed`` inherited from ``global``."""
        out = dict(self.sections[name])
        g = self.sections["global"]
        for key in ("alpha", "seed"):
            if key in out and out[key] is None:
                out[key] = g[key]
        return out

    def as_dict(self) -> dict:
        return {s: {k: _plain(v) for k, v in vals.items()} for s, vals in self.sections.items()}

    @property
    def seed(self) -> int:
        return self.sections["global"]["seed"]


def _plain(v):
    return list(v) if isinstance(v, (list, tuple)) else v


def _power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


def parse_config(text: str | None = None, overrides: dict | None = None,
                 path: str | None = None) -> ExperimentConfig:
    """Build and validate a config.

    ``text`` (or the file at ``path``) holds ``[section]`` blocks of
    ``key = value`` lines; keys outside any section belong to ``global``.
    ``overrides`` maps ``(section, key)`` or ``"section.key"`` to values and
    wins over the file.  Raises :class:`ConfigError` listing every problem.
    """
    errors = []
    raw = configparser.ConfigParser(default_section="__defaults__", interpolation=None)
    raw.optionxform = str
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    if text:
        body = text if text.lstrip().startswith("[") else "[global]\n" + text
        try:
            raw.read_string(body)
        except configparser.Error as exc:
            raise ConfigError([f"unreadable config: {exc}"]) from exc
    supplied = {}
    for sec in raw.sections():
        if sec not in SCHEMA:
            errors.append(f"unknown section [{sec}]")
            continue
        for key, val in raw.items(sec):
            supplied[(sec, key)] = val
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        sec, k = key.split(".", 1) if isinstance(key, str) else key
        supplied[(sec, k)] = val
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for (sec, key), val in supplied.items():
        if sec not in SCHEMA:
            errors.append(f"unknown section [{sec}]")
            continue
        if key not in SCHEMA[sec]:
            errors.append(f"unknown key {key!r} in [{sec}]")
            continue
        conv = SCHEMA[sec][key][0]
        try:
            values[sec][key] = conv(val)
        except (TypeError, ValueError) as exc:
            errors.append(f"[{sec}] {key}: cannot parse {val!r} ({exc})")
    cfg = ExperimentConfig(values)
    if not errors:
        errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: ExperimentConfig) -> list:
    errors = []
    ga = cfg.sections["global"]["alpha"]
    if not (math.isfinite(ga) and ga > 1):
        errors.append(f"[global] alpha={ga} must exceed 1")
    if cfg.sections["global"]["workers"] < 1:
        errors.append("[global] workers must be >= 1")
    k = cfg.section("kernel")
    if not k["alpha"] > 1:
        errors.append(f"[kernel] alpha={k['alpha']} must exceed 1")
    if k["verify"] not in ("phi", "U", "f", "fhat", "dalang", "heatconv", "resolvent", "all"):
        errors.append(f"[kernel] verify={k['verify']!r} is not a kernel check")
    if not k["band_factor"] > 1:
        errors.append("[kernel] band_factor must exceed 1")
    if not k["tol"] > 0:
        errors.append("[kernel] tol must be positive")
    for sec in ROUGH_SECTIONS:
        s = cfg.section(sec)
        if not 1 < s["alpha"] < 2:
            errors.append(f"[{sec}] alpha={s['alpha']} must lie in (1, 2)")
        if "N" in s and not _power_of_two(s["N"]):
            errors.append(f"[{sec}] N={s['N']} must be a power of two >= 2")
        if "replicas" in s and s["replicas"] is not None and s["replicas"] < 0:
            errors.append(f"[{sec}] replicas must be >= 0")
        for key in ("dt", "bm_dt"):
            if key in s and not s[key] > 0:
                errors.append(f"[{sec}] {key} must be positive")
    f = cfg.section("field")
    if not f["L"] > 0:
        errors.append("[field] L must be positive")
    if not f["t"] > 0:
        errors.append("[field] t must be positive")
    scan = f["scan"]
    if any(b <= a for a, b in zip(scan, scan[1:])):
        errors.append("[field] scan must be strictly increasing")
    if any(not _power_of_two(n) and n != 1 for n in scan):
        errors.append("[field] scan sizes must be powers of two")
    sv = cfg.section("solve")
    try:
        from .spde_solver import SigmaSpec

        SigmaSpec.parse(sv["sigma"])
        SigmaSpec.parse(cfg.section("oscillation")["sigma"])
    except ValueError as exc:
        errors.append(f"sigma: {exc}")
    if not sv["T"] >= 0:
        errors.append("[solve] T must be nonnegative")
    m = cfg.section("moments")
    if m["method"] not in ("solver", "feynman-kac"):
        errors.append(f"[moments] method={m['method']!r} must be solver or feynman-kac")
    if any(kk < 1 for kk in m["k"]):
        errors.append("[moments] every k must be >= 1")
    o = cfg.section("oscillation")
    if any(not 0 < d < 1 for d in o["deltas"]):
        errors.append("[oscillation] deltas must lie in (0, 1)")
    if o["budget"] is not None and o["budget"] < 1:
        errors.append("[oscillation] budget must be >= 1")
    v = cfg.sections["verify"]
    if v["replicas"] is not None and v["replicas"] < 0:
        errors.append("[verify] replicas must be >= 0")
    return errors
