"""Experiment configuration: a JSON document validated field by field."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .counterfunctions import parse
from .moduli import ModuliPack
from .operators import MonotoneOperator, OperatorError, operator_from_spec
from .schedules import ParamSchedule, ScheduleError, schedule_from_spec
from .tolerance import Tolerance

ALGORITHMS = ("hppa", "ppa", "halpern")
CHECK_GROUPS = ("lemmas", "moduli", "convergence", "asreg", "witnesses")
TOP_KEYS = {"operator", "schedule", "u", "x0", "budget", "k_max", "g", "tolerance", "out", "seed",
            "algorithm", "halpern_beta", "moduli", "rates", "checks", "perturbed"}
MODULI_KEYS = {"b", "ell", "D", "Dstar", "alpha_nonincreasing", "beta_limit"} | {
    f"sigma{i}" for i in range(7)}
MODULI_PRESETS = ("section5", "section5_perturbed")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is a dotted path and ``line`` the source line when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None,
                 column: int | None = None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)
        self.field, self.line, self.column = field, line, column


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _nat(value, name, text, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"expected an integer >= {minimum}, got {value!r}", name, _line_of(text, name))
    return value


def _coords(value, name, text):
    if (not isinstance(value, list) or not value
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise ConfigError("expected a non-empty list of numbers", name, _line_of(text, name))
    return [float(v) for v in value]


@dataclass
class ExperimentConfig:
    operator: dict
    schedule: dict
    u: list
    x0: list
    budget: int = 1000
    k_max: int = 3
    g: list = field(default_factory=lambda: ["0", "1", "10", "identity"])
    tolerance: dict = field(default_factory=dict)
    out: str = "out"
    seed: int | None = None
    algorithm: str = "hppa"
    halpern_beta: float | None = None
    moduli: dict | str | None = None
    rates: list | None = None
    checks: list | None = None
    perturbed: bool = False
    source: str | None = field(default=None, repr=False, compare=False)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc.msg}", None, exc.lineno, exc.colno) from None
        return cls.from_dict(data, text)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_dict(cls, data: dict, text: str | None = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(data) - TOP_KEYS)
        if unknown:
            raise ConfigError(f"unknown key(s) {unknown}", unknown[0], _line_of(text, unknown[0]))
        for key in ("operator", "schedule", "u", "x0"):
            if key not in data:
                raise ConfigError("missing required key", key)
        cfg = cls(operator=data["operator"], schedule=data["schedule"],
                  u=_coords(data["u"], "u", text), x0=_coords(data["x0"], "x0", text), source=text)
        if "budget" in data:
            cfg.budget = _nat(data["budget"], "budget", text)
        if "k_max" in data:
            cfg.k_max = _nat(data["k_max"], "k_max", text)
        if "seed" in data and data["seed"] is not None:
            cfg.seed = _nat(data["seed"], "seed", text)
        if "out" in data:
            if not isinstance(data["out"], str):
                raise ConfigError("expected a string", "out", _line_of(text, "out"))
            cfg.out = data["out"]
        if "g" in data:
            if not isinstance(data["g"], list):
                raise ConfigError("expected a list of counterfunction descriptors", "g", _line_of(text, "g"))
            for i, desc in enumerate(data["g"]):
                try:
                    parse(desc)
                except ValueError as exc:
                    raise ConfigError(str(exc), f"g[{i}]", _line_of(text, "g")) from None
            cfg.g = [str(d) for d in data["g"]]
        if "tolerance" in data:
            tol = data["tolerance"]
            if not isinstance(tol, dict) or set(tol) - {"atol", "rtol"}:
                raise ConfigError("tolerance takes only 'atol' and 'rtol'", "tolerance",
                                  _line_of(text, "tolerance"))
            cfg.tolerance = {k: float(v) for k, v in tol.items()}
        if "algorithm" in data:
            if data["algorithm"] not in ALGORITHMS:
                raise ConfigError(f"expected one of {ALGORITHMS}", "algorithm", _line_of(text, "algorithm"))
            cfg.algorithm = data["algorithm"]
        if "halpern_beta" in data:
            cfg.halpern_beta = float(data["halpern_beta"])
        if "perturbed" in data:
            cfg.perturbed = bool(data["perturbed"])
        if "moduli" in data:
            cfg.moduli = cls._check_moduli(data["moduli"], text)
        for key, allowed in (("rates", None), ("checks", CHECK_GROUPS)):
            if key in data:
                vals = data[key]
                if not isinstance(vals, list) or not all(isinstance(v, str) for v in vals):
                    raise ConfigError("expected a list of names", key, _line_of(text, key))
                if allowed and set(vals) - set(allowed):
                    raise ConfigError(f"unknown names {sorted(set(vals) - set(allowed))}; expected {allowed}",
                                      key, _line_of(text, key))
                setattr(cfg, key, list(vals))
        cfg.build_operator()
        cfg.build_schedule()
        return cfg

    @staticmethod
    def _check_moduli(mod, text):
        if isinstance(mod, str):
            if mod not in MODULI_PRESETS:
                raise ConfigError(f"unknown moduli preset; expected one of {MODULI_PRESETS}", "moduli",
                                  _line_of(text, "moduli"))
            return mod
        if not isinstance(mod, dict):
            raise ConfigError("moduli must be a preset name or an object", "moduli", _line_of(text, "moduli"))
        unknown = sorted(set(mod) - MODULI_KEYS)
        if unknown:
            raise ConfigError(f"unknown key(s) {unknown}", f"moduli.{unknown[0]}", _line_of(text, unknown[0]))
        for i in range(7):
            key = f"sigma{i}"
            if key in mod:
                try:
                    parse(mod[key])
                except ValueError as exc:
                    raise ConfigError(str(exc), f"moduli.{key}", _line_of(text, key)) from None
        return dict(mod)

    # -- derived objects ---------------------------------------------------

    def build_operator(self) -> MonotoneOperator:
        try:
            op = operator_from_spec(self.operator)
        except (OperatorError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "operator", _line_of(self.source, "operator")) from None
        if op.dim != len(self.u) or op.dim != len(self.x0):
            raise ConfigError(f"u and x0 must have the operator dimension {op.dim}", "u",
                              _line_of(self.source, "u"))
        return op

    def build_schedule(self) -> ParamSchedule:
        try:
            return schedule_from_spec(self.schedule, seed=self.seed)
        except (ScheduleError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "schedule", _line_of(self.source, "schedule")) from None

    def build_tolerance(self) -> Tolerance:
        base = Tolerance.from_env()
        return Tolerance(atol=self.tolerance.get("atol", base.atol), rtol=self.tolerance.get("rtol", base.rtol))

    def build_pack(self, b: int) -> ModuliPack | None:
        """Moduli pack for this instance; ``b`` is used unless the config fixes it."""
        from .showcase import perturbed_pack, section5_pack

        if self.moduli is None:
            return None
        if self.moduli == "section5":
            return section5_pack(b)
        if self.moduli == "section5_perturbed":
            return perturbed_pack(b)
        mod = self.moduli
        sig = {f"sigma{i}": parse(mod[f"sigma{i}"]) for i in range(7) if f"sigma{i}" in mod}
        try:
            return ModuliPack(b=int(mod.get("b", b)), ell=int(mod.get("ell", 0)), D=mod.get("D"),
                              Dstar=mod.get("Dstar"),
                              alpha_nonincreasing=bool(mod.get("alpha_nonincreasing", True)),
                              beta_limit=Fraction(str(mod.get("beta_limit", "1"))), **sig)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "moduli", _line_of(self.source, "moduli")) from None

    def counterfunctions(self) -> list:
        return [parse(d) for d in self.g]

    def constant_Ls(self) -> list:
        """Values ``L`` of the constant counterfunctions among ``g``."""
        return [g.constant_value for g in self.counterfunctions() if g.constant_value is not None]

    # -- identity ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {"operator": self.operator, "schedule": self.schedule, "u": self.u, "x0": self.x0,
                "budget": self.budget, "k_max": self.k_max, "g": self.g, "tolerance": self.tolerance,
                "out": self.out, "seed": self.seed, "algorithm": self.algorithm,
                "halpern_beta": self.halpern_beta, "moduli": self.moduli, "rates": self.rates,
                "checks": self.checks, "perturbed": self.perturbed}

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def default_section5_config(**overrides) -> ExperimentConfig:
    data = {"operator": {"type": "QuadraticShift", "c": [0.0]},
            "schedule": {"alpha": {"family": "power", "q": 0.75, "n0": 2},
                         "beta": {"family": "alternating", "beta": 1.0},
                         "err": {"family": "zero"}},
            "u": [1.0], "x0": [1.0], "budget": 100_000, "k_max": 5, "moduli": "section5"}
    data.update(overrides)
    return ExperimentConfig.from_dict(data)
