"""Run parameters.

Field names are the romanized parameter symbols
(``a1``, ``gammaT``, ``lambdaR`` ...) so a preset row can be pasted into a
``key = value`` config file unchanged.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError
from .ogden import OgdenParams
from .potts import PottsParams


@dataclass(frozen=True)
class AtlasConfig:
    a1: float = 1.0
    a2: float = 5e3
    a3: float = 0.01
    gamma1: float = 1.0
    gamma2: float = 8e4
    gamma3: float = 1.0
    alpha: float = 10.0
    beta: float = 100.0
    gammaR: float = 3.0
    gammaT: float = 0.5
    gammaTtilde: float = 0.5
    lambdaT: float = 1.0
    lambdaR: float = 1.0
    dt: float = 0.001
    nbIter: int = 100
    # plumbing knobs
    step_c: float = 1e-5
    seg_cadence: int = 10
    flow_steps: int = 1
    det_floor: float = 0.05
    energy_tol: float = 0.0   # relative change for early exit; 0 disables
    # images arrive in [0, 1]; the solver works in 8-bit gray levels, the
    # units the preset weights are calibrated for
    intensity_scale: float = 255.0
    cg_tol: float = 1e-8
    potts: PottsParams = field(default_factory=PottsParams)
    threads: int = 1

    def __post_init__(self):
        if self.alpha < 1 or self.beta < 1:
            raise ConfigError("alpha and beta must be >= 1")
        if self.step_c <= 0 or self.dt <= 0:
            raise ConfigError("step_c and dt must be > 0")
        if min(self.a1, self.a2, self.a3) <= 0:
            raise ConfigError("a1, a2, a3 must be > 0")
        for name in ("gamma1", "gamma2", "gamma3", "gammaR", "gammaT", "gammaTtilde",
                     "lambdaT", "lambdaR"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.nbIter < 1 or self.seg_cadence < 1 or self.flow_steps < 1:
            raise ConfigError("nbIter, seg_cadence and flow_steps must be >= 1")
        if self.intensity_scale <= 0:
            raise ConfigError("intensity_scale must be > 0")

    @property
    def ogden(self):
        return OgdenParams(self.a1, self.a2, self.a3)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    @classmethod
    def tshape(cls, **kw):
        return cls(**kw)

    @classmethod
    def heart(cls, **kw):
        base = dict(a1=5.0, a2=1e3, a3=4.0, gamma1=1.0, gamma2=8e4, gamma3=1.0, alpha=100.0,
                    beta=100.0, gammaR=0.02, gammaT=0.03, gammaTtilde=0.03, lambdaT=1.5,
                    lambdaR=1.5, dt=0.01, nbIter=500)
        base.update(kw)
        return cls(**base)

    @classmethod
    def liver(cls, **kw):
        base = dict(a1=5.0, a2=1e3, a3=4.0, gamma1=1.5, gamma2=8e4, gamma3=1.0, alpha=10.0,
                    beta=100.0, gammaR=0.05, gammaT=0.05, gammaTtilde=0.05, lambdaT=1.5,
                    lambdaR=1.5, dt=0.01, nbIter=100)
        base.update(kw)
        return cls(**base)


PRESETS = {"tshape": AtlasConfig.tshape, "heart": AtlasConfig.heart, "liver": AtlasConfig.liver}
