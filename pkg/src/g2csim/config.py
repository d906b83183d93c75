"""Run configuration loaded from JSON.

Every section is optional; unknown keys anywhere raise :class:`ConfigError`.

.. code-block:: json

    {"engine": {"lanes": 32, "P": 1, "clock_hz": 2000000, "drir_sub_row_len": 4},
     "memory": {"weight_gb": 65536, "pingpong": true},
     "adapt": {"bins": 16, "window": 4096, "range": null, "sensitive_range": null,
               "refresh": null, "threshold_mode": "midpoint", "window_mode": "sliding"},
     "orchestrator": {"bpm": 80, "switch_cycles": 64, "functional_converters": true},
     "features": {"sparsity": true, "cir": true, "drir": true},
     "energy": {"pj_per_int8_mac": 1.0}}
"""
from dataclasses import dataclass, fields
import json

from .adaptation import AdaptConfig
from .errors import ConfigError
from .hw import MemoryConfig
from .isa import Features
from .mapper import EngineConfig
from .orchestrator import DEFAULT_BPM, DEFAULT_SWITCH_CYCLES, SimConfig
from .sim import DEFAULT_CLOCK_HZ, EnergyModel

_ENGINE_KEYS = {"lanes": "num_lanes", "P": "macs_per_lane", "drir_sub_row_len": "drir_sub_row_len"}
_ADAPT_KEYS = {"bins": "num_bins", "window": "window", "range": "value_range",
               "sensitive_range": "sensitive_range", "refresh": "refresh", "t_days": "t_days",
               "threshold_mode": "threshold_mode", "window_mode": "window_mode"}
_FEATURE_KEYS = {"sparsity": "sparse", "cir": "cir", "drir": "drir"}


@dataclass(frozen=True)
class RunConfig:
    engine: EngineConfig = EngineConfig()
    memory: MemoryConfig = MemoryConfig()
    adapt: AdaptConfig = AdaptConfig()
    features: Features = Features()
    clock_hz: int = DEFAULT_CLOCK_HZ
    bpm: float = DEFAULT_BPM
    switch_cycles: int = DEFAULT_SWITCH_CYCLES
    functional_converters: bool = True
    energy: EnergyModel = None

    @property
    def sim(self):
        return SimConfig(self.engine, self.memory, self.features, self.clock_hz,
                         self.switch_cycles, self.functional_converters)


def _section(d, name, allowed):
    sec = d.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object")
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(sorted(extra))}")
    return sec


def _typed(name, value, kind):
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if not ok:
        raise ConfigError(f"'{name}' must be {kind.__name__}")
    return value


def _build(cls, name, kwargs):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from None


def from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    sections = {"engine", "memory", "adapt", "orchestrator", "features", "energy"}
    extra = set(d) - sections
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(extra))}")

    eng = _section(d, "engine", set(_ENGINE_KEYS) | {"clock_hz"})
    engine = _build(EngineConfig, "engine",
                    {_ENGINE_KEYS[k]: _typed(k, v, int) for k, v in eng.items() if k != "clock_hz"})
    clock = _typed("clock_hz", eng.get("clock_hz", DEFAULT_CLOCK_HZ), int)
    if clock <= 0:
        raise ConfigError("'clock_hz' must be positive")

    mem_fields = {f.name: f.type for f in fields(MemoryConfig)}
    mem = _section(d, "memory", mem_fields)
    memory = _build(MemoryConfig, "memory",
                    {k: _typed(k, v, bool if k == "pingpong" else int) for k, v in mem.items()})

    ad = _section(d, "adapt", _ADAPT_KEYS)
    akw = {}
    for k, v in ad.items():
        if k in ("range", "sensitive_range"):
            if v is not None:
                if not (isinstance(v, list) and len(v) == 2):
                    raise ConfigError(f"'{k}' must be a two-element list or null")
                v = tuple(_typed(k, x, int) for x in v)
        elif k in ("threshold_mode", "window_mode"):
            if not isinstance(v, str):
                raise ConfigError(f"'{k}' must be a string")
        elif not (k == "refresh" and v is None):
            v = _typed(k, v, int)
        akw[_ADAPT_KEYS[k]] = v
    adapt = _build(AdaptConfig, "adapt", akw)

    orch = _section(d, "orchestrator", {"bpm", "switch_cycles", "functional_converters"})
    bpm = _typed("bpm", orch.get("bpm", DEFAULT_BPM), float)
    switch = _typed("switch_cycles", orch.get("switch_cycles", DEFAULT_SWITCH_CYCLES), int)
    functional = _typed("functional_converters", orch.get("functional_converters", True), bool)
    if bpm <= 0 or switch < 0:
        raise ConfigError("'bpm' must be positive and 'switch_cycles' non-negative")

    feat = _section(d, "features", _FEATURE_KEYS)
    features = Features(**{_FEATURE_KEYS[k]: _typed(k, v, bool) for k, v in feat.items()})

    energy = None
    if "energy" in d:
        en = _section(d, "energy", {f.name for f in fields(EnergyModel)})
        energy = _build(EnergyModel, "energy", {k: _typed(k, v, float) for k, v in en.items()})

    return RunConfig(engine, memory, adapt, features, clock, bpm, switch, functional, energy)


def load_config(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return from_dict(data)
