"""Scenario configuration files.

Configurations are INI documents (read with :mod:`configparser`) whose keys
carry their units, e.g. ``center_m`` or ``spacing_lambda``. Every key is
checked against a fixed schema: unknown keys are rejected and missing
required keys are reported with their section.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import RicianSpec
from .geometry import build_planar_layout, build_roi
from .harness import ImageSpec, Mode, Scenario
from .ris import RISKind

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "dbm_to_watts",
    "noise_power",
    "parse_config",
    "load_config",
    "serialize_config",
    "preset_names",
    "resolve_config",
    "build_scenarios",
    "image_spec",
    "tx_roi_distance",
]


class ConfigError(ValueError):
    """Malformed or incomplete configuration."""


def _vec3(text: str):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _floats(text: str):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        raise ValueError("expected at least one number")
    return tuple(float(p) for p in parts)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    return int(text.strip())


def _str(text: str) -> str:
    return text.strip()


_ARRAY_KEYS = {
    "rows": (_int, True),
    "cols": (_int, True),
    "spacing_lambda": (float, True),
    "center_m": (_vec3, True),
    "normal": (_vec3, False),
}

# section -> key -> (parser, required)
SCHEMA: dict[str, dict] = {
    "signal": {
        "wavelength_m": (float, True),
        "ptx_dbm": (float, True),
        "noise_psd_dbm_hz": (float, True),
        "bandwidth_hz": (float, True),
    },
    "tx": dict(_ARRAY_KEYS),
    "rx": {"monostatic": (_bool, False), **{k: (p, False) for k, (p, _) in _ARRAY_KEYS.items()}},
    "roi": {
        "nx": (_int, True),
        "ny": (_int, True),
        "cell_lambda": (float, True),
        "center_m": (_vec3, True),
        "normal": (_vec3, False),
    },
    "ris": {**dict(_ARRAY_KEYS), "mode": (_str, False), "eta": (complex, False)},
    "fading": {"kappa": (_floats, True)},
    "experiment": {
        "scenario_id": (_str, False),
        "seed": (_int, False),
        "trials": (_int, False),
        "mode": (_str, False),
        "trunc": (_int, False),
        "image": (_str, False),
        "image_magnitude": (float, False),
        "image_dof": (_int, False),
    },
}
REQUIRED_SECTIONS = ("signal", "tx", "rx", "roi", "experiment")
SECTION_ORDER = tuple(SCHEMA)


@dataclass
class ScenarioConfig:
    """Typed, schema-checked configuration: ``sections[name][key] -> value``."""

    sections: dict[str, dict] = field(default_factory=dict)
    source: str = "<config>"

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def __eq__(self, other) -> bool:
        return isinstance(other, ScenarioConfig) and self.sections == other.sections


def dbm_to_watts(p_dbm: float) -> float:
    """``10 ** ((p_dbm - 30) / 10)`` watts."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def noise_power(psd_dbm_hz: float, bandwidth_hz: float) -> float:
    """Noise variance in watts from a PSD in dBm/Hz and a bandwidth in Hz."""
    return dbm_to_watts(psd_dbm_hz) * bandwidth_hz


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse and validate configuration text.

    Raises:
        ConfigError: syntax errors (with line numbers), unknown sections or
            keys, missing required keys, or unparsable values.
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    sections: dict[str, dict] = {}
    for name in cp.sections():
        if name not in SCHEMA:
            line = _line_of_section(text, name)
            raise ConfigError(f"{source}:{line}: unknown section [{name}]")
        schema = SCHEMA[name]
        values = {}
        for key, raw in cp.items(name):
            line = _line_of(text, name, key)
            if key not in schema:
                raise ConfigError(f"{source}:{line}: unknown key '{key}' in section [{name}]")
            parser, _ = schema[key]
            try:
                values[key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}:{line}: bad value for [{name}] {key}: {exc}") from exc
        sections[name] = values
    for name in REQUIRED_SECTIONS:
        if name not in sections:
            raise ConfigError(f"{source}: missing section [{name}]")
    for name, values in sections.items():
        required = [k for k, (_, req) in SCHEMA[name].items() if req]
        if name == "rx" and not values.get("monostatic", False):
            required = [k for k, (_, req) in _ARRAY_KEYS.items() if req]
        for key in required:
            if key not in values:
                raise ConfigError(f"{source}: missing key '{key}' in section [{name}]")
    return ScenarioConfig(sections, source)


def _line_of_section(text: str, name: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip() == f"[{name}]":
            return i
    return None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, complex):
        return repr(value).strip("()")
    return str(value)


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    out = []
    for name in SECTION_ORDER:
        if name not in cfg.sections:
            continue
        out.append(f"[{name}]")
        for key in SCHEMA[name]:
            if key in cfg.sections[name]:
                out.append(f"{key} = {_format(cfg.sections[name][key])}")
        out.append("")
    return "\n".join(out)


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from exc
    return parse_config(text, str(p))


def _presets_dir():
    return resources.files("holoimg") / "presets"


def preset_names() -> list[str]:
    return sorted(f.name[:-4] for f in _presets_dir().iterdir() if f.name.endswith(".cfg"))


def resolve_config(name_or_path) -> ScenarioConfig:
    """Load a file path, or a bundled preset by name (``fig3_right`` or ``fig3_right.cfg``)."""
    p = Path(name_or_path)
    if p.is_file():
        return load_config(p)
    stem = p.name[:-4] if p.name.endswith(".cfg") else p.name
    entry = _presets_dir() / f"{stem}.cfg"
    if entry.is_file():
        return parse_config(entry.read_text(), f"preset:{stem}")
    raise ConfigError(f"no config file or preset named {str(name_or_path)!r}; presets: {', '.join(preset_names())}")


def _layout(values: dict, wavelength: float):
    return build_planar_layout(values["rows"], values["cols"], values["spacing_lambda"] * wavelength,
                               values["center_m"], values.get("normal", (0.0, 1.0, 0.0)))


def image_spec(cfg: ScenarioConfig) -> ImageSpec:
    exp = cfg.sections["experiment"]
    try:
        return ImageSpec(exp.get("image", "l_shape"), exp.get("image_magnitude", 0.1), exp.get("image_dof", 4))
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: [experiment] {exc}") from exc


def build_scenarios(cfg: ScenarioConfig, mode=None, trunc=None, seed=None,
                    ris_mode=None, eta=None) -> list[Scenario]:
    """Scenarios described by ``cfg``; one per Rician factor when ``[fading]`` lists several.

    Keyword arguments override the corresponding configuration entries.
    """
    sec = cfg.sections
    sig = sec["signal"]
    lam = sig["wavelength_m"]
    try:
        tx = _layout(sec["tx"], lam)
        rx = tx if sec["rx"].get("monostatic", False) else _layout(sec["rx"], lam)
        r = sec["roi"]
        roi = build_roi(r["nx"], r["ny"], r["cell_lambda"] * lam, r["center_m"], r.get("normal", (0.0, 1.0, 0.0)))
        exp = sec["experiment"]
        ris = rmode = None
        reta = 1.0
        if "ris" in sec:
            ris = _layout(sec["ris"], lam)
            rmode = RISKind(ris_mode or sec["ris"].get("mode", "matched"))
            reta = eta if eta is not None else sec["ris"].get("eta", 1.0)
        elif ris_mode is not None:
            raise ConfigError(f"{cfg.source}: missing section [ris]")
        base = dict(
            tx=tx, rx=rx, roi=roi, wavelength=lam,
            P_T=dbm_to_watts(sig["ptx_dbm"]),
            sigma2=noise_power(sig["noise_psd_dbm_hz"], sig["bandwidth_hz"]),
            mode=Mode(mode or exp.get("mode", "noopt")),
            R=trunc if trunc is not None else exp.get("trunc"),
            seed=seed if seed is not None else exp.get("seed", 0),
            ris=ris, ris_mode=rmode, ris_eta=reta,
        )
        sid = exp.get("scenario_id", Path(cfg.source).stem.replace("preset:", ""))
        kappas = sec.get("fading", {}).get("kappa")
        if not kappas:
            return [Scenario(scenario_id=sid, **base)]
        return [Scenario(scenario_id=f"{sid}-kappa{k:g}" if len(kappas) > 1 else sid,
                         fading=RicianSpec(k), **base) for k in kappas]
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from exc


def tx_roi_distance(cfg: ScenarioConfig) -> float:
    """Distance between the TX center and the ROI center (for DoF estimates)."""
    return float(np.linalg.norm(np.subtract(cfg.sections["roi"]["center_m"], cfg.sections["tx"]["center_m"])))
