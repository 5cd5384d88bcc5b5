"""INI-style run configuration.

Sections hold flat ``key = value`` pairs; ``#`` starts a comment. Keys are
case-insensitive. Every key has a default, so an empty file is a valid config.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from . import camera as cam_mod
from .control.mpc import MpcConfig
from .control.pid import PidConfig
from .dynamics import VehicleParams
from .lanes import RoiLaw, SlidingWindowConfig
from .sim import ControllerConfigs, Scenario, make_lane_change_road
from .vision import VisionConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        super().__init__(f"line {line}: {message}" if line is not None else message)


# kinds: float, pos (> 0), nonneg (>= 0), int, posint (>= 1), str, bool
SCHEMA = {
    "camera": {
        "fx": (300.0, "pos"), "fy": (300.0, "pos"), "cx": (319.5, "float"), "cy": (239.5, "float"),
        "skew": (0.0, "float"),
        "k1": (-0.05, "float"), "k2": (0.01, "float"), "p1": (0.0005, "float"), "p2": (-0.0005, "float"),
        "k3": (0.0, "float"),
        "mount_height": (0.3, "float"), "pitch_deg": (8.0, "float"), "roll_deg": (10.0, "float"),
        "forward": (0.15, "float"), "lateral": (0.0, "float"),
        "image_width": (640, "posint"), "image_height": (480, "posint"),
    },
    "road": {
        "lane_width": (0.35, "pos"), "marking_width": (0.02, "pos"),
        "offset": (0.35, "float"), "start_s": (2.0, "float"), "ramp_len": (2.0, "pos"),
    },
    "vehicle": {
        "m": (3.2, "pos"), "i_z": (0.05, "pos"), "a": (0.15, "pos"), "b": (0.15, "pos"),
        "c_f": (50.0, "pos"), "c_r": (50.0, "pos"), "w": (0.2, "nonneg"), "delta_max": (0.4, "pos"),
        "v_min_slip": (0.3, "pos"),
    },
    "mpc": {
        "n": (20, "posint"), "n_u": (5, "posint"), "n_c": (20, "posint"), "ts": (0.05, "pos"),
        "q_y": (10.0, "nonneg"), "q_psi": (1.0, "nonneg"), "r": (1.0, "pos"),
        "p_y": (10.0, "nonneg"), "p_psi": (1.0, "nonneg"),
        "u_min": (-0.4, "float"), "u_max": (0.4, "float"),
        "y_min": (-math.inf, "float"), "y_max": (math.inf, "float"),
        "psi_min": (-math.inf, "float"), "psi_max": (math.inf, "float"),
        "r_max": (math.inf, "pos"), "soft_weight": (0.0, "nonneg"),
        "tol": (1e-8, "pos"), "max_iter": (5000, "posint"),
        "speed_gain": (1.0, "nonneg"), "a_max": (2.0, "pos"),
    },
    "pid": {
        "kp": (1.1, "float"), "ki": (0.6, "float"), "kd": (0.25, "float"), "i_limit": (0.5, "pos"),
    },
    "vision": {
        "rotate_deg": (10.0, "float"), "near": (0.5, "pos"), "patch_length": (2.4, "pos"),
        "patch_width": (1.2, "pos"), "bev_width": (640, "posint"), "bev_height": (480, "posint"),
        "blur_size": (5, "posint"), "blur_sigma": (1.5, "pos"), "threshold": (30, "int"),
        "open_size": (5, "posint"), "n_samples": (40, "posint"),
        "n_windows": (9, "posint"), "margin": (60, "posint"), "minpix": (40, "posint"), "degree": (3, "posint"),
        "roi_f0": (0.55, "float"), "roi_k_v": (0.05, "float"), "roi_f_min": (0.30, "float"),
        "roi_f_max": (0.60, "float"),
    },
    "scenario": {
        "name": ("lane_change", "str"), "target_speed": (2.0, "pos"), "duration": (8.0, "pos"),
        "plant_dt": (0.002, "pos"), "control_dt": (0.05, "pos"),
        "perception_mode": ("ground_truth", "str"), "seed": (0, "int"),
        "lateral_noise_std": (0.0, "nonneg"), "rmse_threshold": (0.10, "pos"),
    },
}


def _convert(section: str, key: str, raw: str, line: int | None, display: str | None = None):
    default, kind = SCHEMA[section][key]
    key = display or key
    where = f"[{section}] {key}"
    if kind == "str":
        return raw
    if kind == "bool":
        if raw.lower() not in ("true", "false"):
            raise ConfigError(f"{where} must be true or false, got {raw!r}", line, key)
        return raw.lower() == "true"
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"{where} must be a number, got {raw!r}", line, key) from None
    if math.isnan(val):
        raise ConfigError(f"{where} must not be NaN", line, key)
    if kind in ("int", "posint"):
        if not float(val).is_integer():
            raise ConfigError(f"{where} must be an integer, got {raw!r}", line, key)
        val = int(val)
        if kind == "posint" and val < 1:
            raise ConfigError(f"{where} must be a positive integer (>= 1), got {val}", line, key)
        return val
    if kind == "pos" and not val > 0:
        raise ConfigError(f"{where} must be positive (> 0), got {val}", line, key)
    if kind == "nonneg" and not val >= 0:
        raise ConfigError(f"{where} must be non-negative (>= 0), got {val}", line, key)
    return val


@dataclass
class Config:
    values: dict = field(default_factory=lambda: {s: {k: v[0] for k, v in keys.items()}
                                                  for s, keys in SCHEMA.items()})

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    # -- builders ------------------------------------------------------------

    def camera(self) -> cam_mod.CameraModel:
        c = self["camera"]
        dist = (c["k1"], c["k2"], c["p1"], c["p2"], c["k3"])
        return cam_mod.mount_camera(c["fx"], c["fy"], c["cx"], c["cy"], dist, height=c["mount_height"],
                                    pitch_deg=c["pitch_deg"], roll_deg=c["roll_deg"], forward=c["forward"],
                                    lateral=c["lateral"], skew=c["skew"])

    def road(self) -> cam_mod.RoadModel:
        r = self["road"]
        return make_lane_change_road(r["offset"], r["start_s"], r["ramp_len"], r["lane_width"], r["marking_width"])

    def vehicle(self) -> VehicleParams:
        v = self["vehicle"]
        return VehicleParams(m=v["m"], I_z=v["i_z"], a=v["a"], b=v["b"], C_f=v["c_f"], C_r=v["c_r"], W=v["w"],
                             delta_max=v["delta_max"], v_min_slip=v["v_min_slip"])

    def mpc(self) -> MpcConfig:
        c = self["mpc"]
        inf = math.inf
        return MpcConfig(
            N=c["n"], N_u=c["n_u"], N_c=c["n_c"], Ts=c["ts"],
            Q=np.diag([c["q_y"], c["q_psi"]]), R=np.array([[c["r"]]]), P=np.diag([c["p_y"], c["p_psi"]]),
            u_min=np.array([c["u_min"]]), u_max=np.array([c["u_max"]]),
            y_min=np.array([c["y_min"], c["psi_min"]]), y_max=np.array([c["y_max"], c["psi_max"]]),
            x_min=np.array([-inf] * 5 + [-c["r_max"]]), x_max=np.array([inf] * 5 + [c["r_max"]]),
            soft_weight=c["soft_weight"], tol=c["tol"], max_iter=c["max_iter"],
            speed_gain=c["speed_gain"], a_max=c["a_max"])

    def pid(self) -> PidConfig:
        c = self["pid"]
        return PidConfig(c["kp"], c["ki"], c["kd"], c["i_limit"])

    def vision(self) -> VisionConfig:
        c, cam = self["vision"], self["camera"]
        windows = SlidingWindowConfig(c["n_windows"], c["margin"], c["minpix"], c["roi_f0"], c["degree"])
        roi = RoiLaw(c["roi_f0"], c["roi_k_v"], c["roi_f_min"], c["roi_f_max"])
        return VisionConfig(width=cam["image_width"], height=cam["image_height"], rotate_deg=c["rotate_deg"],
                            near=c["near"], patch_length=c["patch_length"], patch_width=c["patch_width"],
                            bev_width=c["bev_width"], bev_height=c["bev_height"], blur_size=c["blur_size"],
                            blur_sigma=c["blur_sigma"], threshold=c["threshold"], open_size=c["open_size"],
                            n_samples=c["n_samples"], windows=windows, roi=roi)

    def scenario(self, seed: int | None = None) -> Scenario:
        s = self["scenario"]
        return Scenario(name=s["name"], road=self.road(), target_speed=s["target_speed"], duration=s["duration"],
                        plant_dt=s["plant_dt"], control_dt=s["control_dt"], perception_mode=s["perception_mode"],
                        noise_seed=s["seed"] if seed is None else seed, lateral_noise_std=s["lateral_noise_std"])

    def controller_configs(self) -> ControllerConfigs:
        return ControllerConfigs(mpc=self.mpc(), pid=self.pid(), vision=self.vision(), camera=self.camera())

    def validate(self):
        """Build every component once so invalid combinations surface at load time."""
        builders = {"camera": self.camera, "road": self.road, "vehicle": self.vehicle, "mpc": self.mpc,
                    "pid": self.pid, "vision": self.vision, "scenario": self.scenario}
        for section, build in builders.items():
            try:
                build()
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"[{section}] {exc}") from None
        return self


def _key_lines(text: str) -> dict:
    """(section, key) -> line number of its assignment, for error messages."""
    lines, section = {}, None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            lines.setdefault((section, None), lineno)
        elif "=" in line and section is not None:
            lines.setdefault((section, line.split("=", 1)[0].strip().lower()), lineno)
    return lines


def parse_config(text: str) -> Config:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       strict=True, empty_lines_in_values=False, interpolation=None,
                                       default_section="\x00")
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"expected 'key = value', got {line.strip(chr(39))}", lineno) from None
    lines = _key_lines(text)
    cfg = Config()
    for section in parser.sections():
        name = section.strip().lower()
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((name, None)))
        for key, value in parser.items(section):
            lineno = lines.get((name, key))
            if key not in SCHEMA[name]:
                raise ConfigError(f"unknown key {key!r} in [{name}]", lineno, key)
            if not value:
                raise ConfigError(f"missing value for {key!r} in [{name}]", lineno, key)
            if "\n" in value:
                # configparser joins indented lines onto the previous value
                raise ConfigError(f"unexpected continuation line after {key!r}", lineno + 1 if lineno else None, key)
            written = _written_key(text, lineno) or key
            cfg.values[name][key] = _convert(name, key, value, lineno, written)
    return cfg.validate()


def _written_key(text: str, lineno: int | None) -> str | None:
    if lineno is None:
        return None
    return text.splitlines()[lineno - 1].split("=", 1)[0].strip()


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_config_text() -> str:
    """Every key with its default value, one section after another."""
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, (default, _) in keys.items():
            out.append(f"{key} = {default}")
        out.append("")
    return "\n".join(out)
