"""Experiment configuration: a strict sectioned key=value format with
line-numbered errors, canonical serialization, and shipped presets.

Example::

    [interferometer]
    arm_delay = 7e-08
    [run]
    shots = 100000
    seed = 12345

Unknown sections or keys are rejected.  A [budget] section, when present,
maps the four named contrast factors onto model parameters: stability ->
Gaussian phase jitter with matching mean cosine, alignment -> mode
overlap, spectral -> the scalar spectral contrast, init_readout -> a
preparation flip sized against the configured readout statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .control import CRCConfig, NoiseSettings
from .interferometer import DetectorConfig, EODConfig, InterferometerConfig
from .noise import ReadoutModel, init_flip_for_budget, jitter_rms_for_contrast
from .nv import EmitterParams, MemoryParams
from .program import RunSettings


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _unit(lo=0.0, hi=1.0):
    def check(v):
        if not lo <= v <= hi:
            raise ValueError(f"must be in [{lo}, {hi}]")

    return check


def _positive(v):
    if v <= 0:
        raise ValueError("must be positive")


def _non_negative(v):
    if v < 0:
        raise ValueError("must be non-negative")


def _choice(*opts):
    def check(v):
        if v not in opts:
            raise ValueError(f"must be one of {opts}")

    return check


@dataclass(frozen=True)
class _Field:
    typ: type
    default: object
    check: object = None


_REGISTRY: dict[str, dict[str, _Field]] = {
    "emitter": {
        "eta_collect": _Field(float, 1.0, _unit()),
        "eta_detect": _Field(float, 1.0, _unit()),
        "excited_lifetime": _Field(float, 12e-9, _positive),
        "leakage_rate": _Field(float, 0.0, _non_negative),
        "leakage_decay": _Field(float, 10e-9, _positive),
        "excitation_error": _Field(float, 0.0, _unit(0.0, 0.999)),
    },
    "interferometer": {
        "arm_delay": _Field(float, 70e-9, _positive),
        "phase": _Field(float, 0.0, None),
        "mode_overlap": _Field(float, 1.0, _unit()),
        "phase_jitter_rms": _Field(float, 0.0, _non_negative),
    },
    "eod": {
        "enabled": _Field(bool, True, None),
        "fidelity": _Field(float, 1.0, _unit()),
        "switch_period": _Field(float, 70e-9, _positive),
        "drive_delay": _Field(float, 0.0, None),
    },
    "detector": {
        "dark_rate": _Field(float, 0.0, _non_negative),
        "window": _Field(float, 210e-9, _positive),
        "filter_start": _Field(float, 0.0, _non_negative),
        "filter_end": _Field(float, 0.0, _non_negative),
    },
    "readout": {
        "lambda_bright": _Field(float, 20.0, _positive),
        "lambda_dark": _Field(float, 0.5, _non_negative),
        "threshold": _Field(int, 3, None),
    },
    "noise": {
        "sigma_diffusion": _Field(float, 0.0, _non_negative),
        "spectral_mode": _Field(str, "physical", _choice("physical", "scalar")),
        "spectral_factor": _Field(float, 1.0, _unit(1e-6, 1.0)),
        "resample": _Field(str, "per_block", _choice("per_block", "per_shot")),
        "drift": _Field(str, "none", _choice("none", "ou")),
        "ou_tau_blocks": _Field(float, 10.0, _positive),
        "p_ionize": _Field(float, 0.0, _unit()),
        "combined_init_readout_fidelity": _Field(float, 1.0, _unit(1e-6, 1.0)),
        "init_flip": _Field(float, -1.0, None),  # -1 = derive from the combined fidelity
        "electron_dephase": _Field(float, 0.0, _unit(0.0, 0.5)),
    },
    "crc": {
        "enabled": _Field(bool, False, None),
        "window": _Field(float, 100e-6, _positive),
        "threshold": _Field(int, 30, _non_negative),
        "rate_on_resonance": _Field(float, 4.0e5, _positive),
        "linewidth": _Field(float, 3.0e6, _positive),
        "block_length": _Field(int, 1000, _positive),
        "max_recharge_attempts": _Field(int, 10, _positive),
        "recharge_success": _Field(float, 0.7, _unit()),
    },
    "memory": {
        "t2_hahn": _Field(float, 0.1, _positive),
        "decay_exponent": _Field(float, 1.0, None),
        "store_time": _Field(float, 0.0, _non_negative),
    },
    "protocol": {
        "kind": _Field(str, "electron", _choice("electron", "nuclear")),
        "basis": _Field(str, "x", _choice("x", "z")),
        "nuclear_flip": _Field(float, 0.0, _unit(0.0, 0.5)),
        "nuclear_dephase": _Field(float, 0.0, _unit(0.0, 0.5)),
        "mw_pi_error": _Field(float, 0.0, _unit(0.0, 0.5)),
    },
    "budget": {
        "init_readout": _Field(float, 1.0, _unit(1e-6, 1.0)),
        "stability": _Field(float, 1.0, _unit(1e-6, 1.0)),
        "alignment": _Field(float, 1.0, _unit(1e-6, 1.0)),
        "spectral": _Field(float, 1.0, _unit(1e-6, 1.0)),
    },
    "run": {
        "shots": _Field(int, 100000, _positive),
        "seed": _Field(int, 12345, _non_negative),
        "phase_points": _Field(int, 12, _positive),
        "lanes": _Field(int, 8, _positive),
        "threads": _Field(int, 1, _positive),
    },
}


@dataclass
class ExperimentConfig:
    values: dict
    has_budget: bool = False

    def __eq__(self, other):
        return (
            isinstance(other, ExperimentConfig)
            and self.values == other.values
            and self.has_budget == other.has_budget
        )

    def get(self, section: str, key: str):
        return self.values[section][key]

    # -- section constructors -------------------------------------------

    def emitter(self) -> EmitterParams:
        v = self.values["emitter"]
        d = self.values["detector"]
        return EmitterParams(
            eta_collect=v["eta_collect"],
            eta_detect=v["eta_detect"],
            excited_lifetime=v["excited_lifetime"],
            leakage_rate=v["leakage_rate"],
            leakage_decay=v["leakage_decay"],
            time_filter=(d["filter_start"], d["filter_end"]),
            excitation_error=v["excitation_error"],
        )

    def interferometer(self) -> InterferometerConfig:
        v = self.values["interferometer"]
        jitter = v["phase_jitter_rms"]
        overlap = v["mode_overlap"]
        if self.has_budget:
            b = self.values["budget"]
            jitter = jitter_rms_for_contrast(b["stability"]) if b["stability"] < 1.0 else 0.0
            overlap = b["alignment"]
        return InterferometerConfig(
            arm_delay=v["arm_delay"],
            phase_phi=v["phase"],
            mode_overlap=overlap,
            phase_jitter_rms=jitter,
        )

    def eod(self) -> EODConfig:
        v = self.values["eod"]
        return EODConfig(
            enabled=v["enabled"],
            fidelity=v["fidelity"],
            switch_period=v["switch_period"],
            drive_delay=v["drive_delay"],
        )

    def detector(self) -> DetectorConfig:
        v = self.values["detector"]
        return DetectorConfig(
            dark_rate=v["dark_rate"],
            detection_window=v["window"],
            time_filter=(v["filter_start"], v["filter_end"]),
        )

    def readout(self) -> ReadoutModel:
        v = self.values["readout"]
        n = self.values["noise"]
        combined = self.values["budget"]["init_readout"] if self.has_budget else n["combined_init_readout_fidelity"]
        return ReadoutModel(
            lambda_bright=v["lambda_bright"],
            lambda_dark=v["lambda_dark"],
            threshold=v["threshold"],
            combined_init_readout_fidelity=combined,
        )

    def init_flip(self) -> float:
        n = self.values["noise"]
        if n["init_flip"] >= 0.0:
            return n["init_flip"]
        model = self.readout()
        if model.combined_init_readout_fidelity >= 1.0:
            return 0.0
        return init_flip_for_budget(model.combined_init_readout_fidelity, model)

    def memory(self) -> MemoryParams:
        v = self.values["memory"]
        return MemoryParams(t2_hahn=v["t2_hahn"], decay_exponent=v["decay_exponent"])

    def noise_settings(self) -> NoiseSettings:
        v = self.values["noise"]
        mode, factor = v["spectral_mode"], v["spectral_factor"]
        if self.has_budget:
            mode, factor = "scalar", self.values["budget"]["spectral"]
        return NoiseSettings(
            sigma_diffusion=v["sigma_diffusion"],
            spectral_mode=mode,
            spectral_factor=factor,
            resample=v["resample"],
            drift=v["drift"],
            ou_tau_blocks=v["ou_tau_blocks"],
            p_ionize=v["p_ionize"],
        )

    def crc(self) -> CRCConfig:
        v = self.values["crc"]
        return CRCConfig(
            enabled=v["enabled"],
            window=v["window"],
            threshold=v["threshold"],
            rate_on_resonance=v["rate_on_resonance"],
            linewidth=v["linewidth"],
            block_length=v["block_length"],
            max_recharge_attempts=v["max_recharge_attempts"],
            recharge_success=v["recharge_success"],
        )

    def settings(self, basis: str | None = None, phi: float | None = None) -> RunSettings:
        p = self.values["protocol"]
        return RunSettings(
            protocol=p["kind"],
            basis=(basis or p["basis"]).upper(),
            phi=self.values["interferometer"]["phase"] if phi is None else float(phi),
            emitter=self.emitter(),
            icfg=self.interferometer(),
            eod=self.eod(),
            det=self.detector(),
            readout=self.readout(),
            init_flip=self.init_flip(),
            electron_dephase=self.values["noise"]["electron_dephase"],
            nuclear_flip=p["nuclear_flip"],
            nuclear_dephase=p["nuclear_dephase"],
            store_time=self.values["memory"]["store_time"],
            memory=self.memory(),
            mw_pi_error=p["mw_pi_error"],
        )

    def budget_factors(self) -> dict | None:
        if not self.has_budget:
            return None
        b = self.values["budget"]
        return {
            "init_readout": b["init_readout"],
            "interferometer_stability": b["stability"],
            "mode_overlap": b["alignment"],
            "spectral": b["spectral"],
        }


def _parse_value(raw: str, spec: _Field, line: int, where: str):
    raw = raw.strip()
    try:
        if spec.typ is bool:
            if raw.lower() in ("true", "yes", "on", "1"):
                return True
            if raw.lower() in ("false", "no", "off", "0"):
                return False
            raise ValueError("expected true/false")
        if spec.typ is int:
            v = int(raw, 0)
        elif spec.typ is float:
            v = float(raw)
        else:
            v = raw
        if spec.check is not None:
            spec.check(v)
        return v
    except ValueError as e:
        raise ConfigError(f"{where}: {e}", line) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError naming the first bad line."""
    values = {sec: {k: f.default for k, f in fields.items()} for sec, fields in _REGISTRY.items()}
    seen_budget = False
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _REGISTRY:
                raise ConfigError(f"unknown section [{section}]", lineno)
            if section == "budget":
                seen_budget = True
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside any [section]", lineno)
        key, _, rawval = line.partition("=")
        key = key.strip()
        if key not in _REGISTRY[section]:
            raise ConfigError(f"unknown key {key!r} in section [{section}]", lineno)
        values[section][key] = _parse_value(rawval, _REGISTRY[section][key], lineno, f"{section}.{key}")

    cfg = ExperimentConfig(values=values, has_budget=seen_budget)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: ExperimentConfig):
    d = cfg.values["detector"]
    if d["filter_end"] > 0.0 and d["filter_end"] <= d["filter_start"]:
        raise ConfigError("detector.filter_end must exceed filter_start when set")
    try:
        if cfg.emitter().eta_effective() <= 0.0:
            raise ConfigError("time filter rejects the entire emission window")
        cfg.init_flip()
        cfg.readout()
        cfg.interferometer()
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None
    v = cfg.values["memory"]
    if v["decay_exponent"] < 1.0:
        raise ConfigError("memory.decay_exponent must be >= 1")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse(serialize(parse(t))) == parse(t)."""
    out = []
    for section, fields in _REGISTRY.items():
        if section == "budget" and not cfg.has_budget:
            continue
        out.append(f"[{section}]")
        for key, spec in fields.items():
            v = cfg.values[section][key]
            if spec.typ is bool:
                out.append(f"{key} = {'true' if v else 'false'}")
            elif spec.typ is float:
                out.append(f"{key} = {v!r}")
            else:
                out.append(f"{key} = {v}")
        out.append("")
    return "\n".join(out)


def load_preset(name: str) -> ExperimentConfig:
    """Load a shipped preset by name (fig1e, fig2bc, fig3, ...)."""
    ref = resources.files("spinphoton").joinpath(f"presets/{name}.cfg")
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    return parse_config(ref.read_text(encoding="utf-8"))


def preset_names() -> list[str]:
    root = resources.files("spinphoton").joinpath("presets")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))
