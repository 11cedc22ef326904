"""Flat key=value experiment configuration with [section] headers.

Every run echoes its fully-resolved parameter dictionary (defaults filled
in) into the artifacts it writes, keyed by a stable content hash, so any
report row can be traced back to the exact physical setup.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

KNOWN_KINDS = ("assemble", "sweep", "decay", "simulate", "audit", "trilinear")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


_DEFAULTS = {
    "experiment": {"id": "run", "kind": "", "seed": 1234, "out": "out"},
    "grid": {"extent": 6.0, "nodes_per_axis": 12},
    "kernel": {"gamma": 1.0, "n_cos": 8, "n_phi": 8},
    "lattice": {"dim": 1, "box_length": 64.0 * 2.0 * np.pi, "n_modes": 64},
    "sweep": {"k_list": "0.125,0.25,0.5,4,8", "n_samples": 96},
    "decay": {"sigma_pairs": "0:-1.5,1.5:-1.5", "n_times": 48,
              "window_lo_factor": 3.0, "window_hi_factor": 0.0625,
              "micro_sigma": 0.0},
    "simulate": {"t_end": 20.0, "amplitude": 1e-3, "n_snapshots": 200,
                 "sigma0": -1.5, "conserve": True, "gamma_on": True,
                 "gamma_precision": "single"},
    "audit": {"n_fields": 100, "trace_t_end": 1.0, "trace_snapshots": 120},
    "trilinear": {"ensemble": 50, "n_snapshots": 4},
}


def _coerce(default, raw: str):
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file {path} not found or unreadable")
        values = {sec: dict(opts) for sec, opts in _DEFAULTS.items()}
        for sec in parser.sections():
            if sec not in values:
                raise ConfigError(f"unknown config section [{sec}]")
            for key, raw in parser.items(sec):
                if key not in values[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]")
                values[sec][key] = _coerce(_DEFAULTS[sec][key], raw)
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def defaults(cls, kind: str, **overrides) -> "ExperimentConfig":
        values = {sec: dict(opts) for sec, opts in _DEFAULTS.items()}
        values["experiment"]["kind"] = kind
        for dotted, val in overrides.items():
            sec, key = dotted.split(".")
            values[sec][key] = val
        cfg = cls(values)
        cfg.validate()
        return cfg

    # -- accessors ------------------------------------------------------------
    def __getitem__(self, dotted: str):
        sec, key = dotted.split(".")
        return self.values[sec][key]

    @property
    def kind(self) -> str:
        return self.values["experiment"]["kind"]

    @property
    def seed(self) -> int:
        return int(self.values["experiment"]["seed"])

    def sigma_pairs(self) -> list:
        out = []
        for chunk in str(self.values["decay"]["sigma_pairs"]).split(","):
            sigma, sigma0 = chunk.strip().split(":")
            out.append((float(sigma), float(sigma0)))
        return out

    def k_list(self) -> list:
        return [float(x) for x in
                str(self.values["sweep"]["k_list"]).split(",")]

    # -- validation -----------------------------------------------------------
    def validate(self) -> None:
        kind = self.kind
        if kind not in KNOWN_KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}; "
                              f"expected one of {KNOWN_KINDS}")
        if self.values["kernel"]["gamma"] < 0 or \
                self.values["kernel"]["gamma"] > 1:
            raise ConfigError("kernel gamma must lie in [0, 1]")
        if kind == "decay":
            for sigma, sigma0 in self.sigma_pairs():
                if not sigma > sigma0:
                    raise ConfigError(
                        f"decay fit needs sigma > sigma0, got "
                        f"({sigma}, {sigma0})")
                if not -1.5 <= sigma0 < 0.5:
                    raise ConfigError(
                        f"decay fit needs sigma0 in [-3/2, 1/2), got {sigma0}")
        if kind == "simulate":
            s0 = self.values["simulate"]["sigma0"]
            if not -1.5 <= s0 < 0.5:
                raise ConfigError(f"sigma0 in [-3/2, 1/2) required, got {s0}")

    # -- provenance -----------------------------------------------------------
    def as_dict(self) -> dict:
        return {sec: dict(opts) for sec, opts in self.values.items()}

    def content_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
