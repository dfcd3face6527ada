"""Experiment configuration: one structured YAML file, schema-checked.

Example:

    seed: 1234
    grid: {area_factor: 8.0, nx: 64, ny: 64, N: 2}   # area = factor*pi*N
    physics: {mu: [10, 30, 100], sigma: 1}
    initial: {zeros: [[0.35, 0.5], [0.65, 0.5]], fractional: true}
    run: {tau_star: 0.5, scheme: rk4, mode: temporal, samples: 10}
    outputs: {dir: out}

grid accepts either explicit {Lx, Ly} or {area_factor} (square torus with
area = area_factor*pi*N, so the Bradlow bound reads factor > 4).  Zeros
may be given in absolute coordinates or as fractions of the periods.
Exactly one of initial.zeros / initial.snapshot must be present.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .grid import make_grid


class ConfigError(ValueError):
    """Configuration file violates the schema."""


@dataclass
class ExperimentConfig:
    grid: dict
    physics: dict
    initial: dict
    run: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int = 1234
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        for key in ("grid", "physics", "initial"):
            if key not in data:
                raise ConfigError(f"missing required section {key!r}")
        cfg = cls(
            grid=dict(data["grid"]),
            physics=dict(data["physics"]),
            initial=dict(data["initial"]),
            run=dict(data.get("run", {})),
            outputs=dict(data.get("outputs", {})),
            seed=int(data.get("seed", 1234)),
            raw=data,
        )
        cfg.validate()
        return cfg

    def validate(self):
        g = self.grid
        if "N" not in g:
            raise ConfigError("grid.N is required")
        n_given = int(g["N"])
        if ("Lx" in g) == ("area_factor" in g):
            raise ConfigError("give exactly one of grid.{Lx,Ly} or grid.area_factor")
        for key in ("nx", "ny"):
            if int(g.get(key, 0)) < 8:
                raise ConfigError(f"grid.{key} must be >= 8")

        mus = self.mu_list()
        if any(m < 1.0 for m in mus):
            raise ConfigError("physics.mu values must be >= 1")
        if int(self.physics.get("sigma", 0)) not in (-1, 0, 1):
            raise ConfigError("physics.sigma must be -1, 0 or +1")

        has_zeros = "zeros" in self.initial
        has_snap = "snapshot" in self.initial
        if has_zeros == has_snap:
            raise ConfigError("give exactly one of initial.zeros / initial.snapshot")
        if has_zeros and len(self.initial["zeros"]) != n_given:
            raise ConfigError(
                f"{len(self.initial['zeros'])} zeros given for degree N = {n_given}"
            )

        scheme = self.run.get("scheme", "rk4")
        if scheme not in ("rk4", "imex"):
            raise ConfigError(f"unknown run.scheme {scheme!r}")
        mode = self.run.get("mode", "temporal")
        if mode not in ("temporal", "gauge1"):
            raise ConfigError(f"unknown run.mode {mode!r}")

    def mu_list(self):
        mu = self.physics.get("mu", 1.0)
        return [float(m) for m in (mu if isinstance(mu, (list, tuple)) else [mu])]

    def make_grid(self):
        g = self.grid
        N = int(g["N"])
        if "area_factor" in g:
            L = float(np.sqrt(float(g["area_factor"]) * np.pi * max(N, 1)))
            Lx = Ly = L
        else:
            Lx, Ly = float(g["Lx"]), float(g["Ly"])
        return make_grid(Lx, Ly, int(g["nx"]), int(g["ny"]), N)

    def zeros(self, grid):
        pts = np.asarray(self.initial["zeros"], dtype=float).reshape(-1, 2)
        if self.initial.get("fractional", False):
            pts = pts * np.array([grid.Lx, grid.Ly])
        return grid.wrap_coords(pts)

    def header_lines(self):
        """Config embedded as comment lines for reproducible outputs."""
        dumped = yaml.safe_dump(self.raw, sort_keys=True).strip().split("\n")
        return ["# " + line for line in dumped]
