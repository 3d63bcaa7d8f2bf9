"""Flat ``key = value`` experiment configuration with a stable content hash."""

from dataclasses import dataclass, field
import hashlib

DEFAULTS = {
    "tree.kind": "sphere",
    "tree.b": "2",
    "tree.d": "2",
    "tree.depth": "100",
    "tree.file": "",
    "walk.m": "1.0",
    "walk.p1": "0.5",
    "walk.lambda": "1.0",
    "walk.M": "1",
    "walk.method": "exact",
    "walk.budget": "100000000",
    "sweep.m": "0.25,0.5,1.0",
    "sweep.M": "1,2,4",
    "sweep.lambda": "1.0",
    "sweep.depths": "25,50,100",
    "trials.env": "100",
    "trials.per_env": "100",
    "trials.count": "10000",
    "verdict.escape_floor": "0.02",
    "verdict.slope_floor": "-0.001",
    "estimate.depth": "2000",
    "estimate.tol": "0.01",
    "perc.psi": "delta",
    "perc.delta": "0.5,3.0",
    "perc.c": "0.5",
    "perc.n0": "1",
    "perc.eps": "0.05",
    "perc.runs": "10000",
    "flows.gamma": "1.5,2.0",
    "flows.c_q": "1.0",
    "verify.trials": "10000",
}

# keys that only affect where output goes, not what it contains
_PRESENTATION = {"output", "figure"}


class ConfigError(ValueError):
    pass


def parse_lines(text, source="<config>"):
    out = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{i}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{i}: empty key")
        out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    @classmethod
    def build(cls, subcommand, file_text=None, overrides=(), source="<config>"):
        values = dict(DEFAULTS)
        user = parse_lines(file_text, source) if file_text else {}
        for item in overrides:
            user.update(parse_lines(item, "--set"))
        unknown = sorted(k for k in user if k not in DEFAULTS and k not in _PRESENTATION
                         and k != "seed")
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "seed" not in user:
            raise ConfigError("a seed is required (set 'seed = <int>')")
        values.update(user)
        cfg = cls(subcommand, values)
        cfg.int("seed")
        return cfg

    def get(self, key):
        return self.values.get(key, "")

    def int(self, key):
        try:
            return int(self.values[key])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{key} must be an integer") from exc

    def float(self, key):
        try:
            return float(self.values[key])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{key} must be a number") from exc

    def floats(self, key):
        try:
            return [float(x) for x in self.values[key].split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"{key} must be a comma-separated list of numbers") from exc

    def ints(self, key):
        vals = self.floats(key)
        if any(v != int(v) for v in vals):
            raise ConfigError(f"{key} must list integers")
        return [int(v) for v in vals]

    @property
    def seed(self):
        return self.int("seed")

    def canonical(self):
        """Sorted ``key = value`` lines of everything that affects results."""
        lines = [f"subcommand = {self.subcommand}"]
        lines += [f"{k} = {v}" for k, v in sorted(self.values.items()) if k not in _PRESENTATION]
        return "\n".join(lines) + "\n"

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]
