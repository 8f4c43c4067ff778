"""Run configuration: a YAML (or JSON) document validated with pydantic."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .flock_core import as_agent_vector
from .noise import GaussianIID, NoNoise, SmoothedWiener, UniformBall, default_kernel, stream
from .theory import ModelParams

INIT_STREAM_KEY = 2**32 - 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsConfig(_Strict):
    k: int = Field(ge=2)
    K: float = Field(gt=0)
    alpha: float = Field(ge=0)
    nu: float = Field(gt=0)
    h: Optional[float] = Field(default=None, gt=0)


class GeneratorConfig(_Strict):
    kind: Literal["coincident", "random"] = "random"
    x_dissimilarity: float = Field(default=0.0, ge=0)
    v_dissimilarity: float = Field(ge=0)


class InitialConfig(_Strict):
    positions: Optional[list[list[float]]] = None
    velocities: Optional[list[list[float]]] = None
    generator: Optional[GeneratorConfig] = None

    @model_validator(mode="after")
    def _one_source(self):
        explicit = self.positions is not None or self.velocities is not None
        if explicit == (self.generator is not None):
            raise ValueError("give either explicit positions and velocities or a generator")
        if explicit and (self.positions is None or self.velocities is None):
            raise ValueError("explicit initial state needs both positions and velocities")
        return self


class NoiseConfig(_Strict):
    kind: Literal["none", "uniform", "gaussian", "smoothed_wiener"] = "none"
    r: Optional[float] = Field(default=None, gt=0)
    sigma: Optional[float] = Field(default=None, gt=0)
    delta: Optional[float] = Field(default=None, gt=0)
    dt_w: Optional[float] = Field(default=None, gt=0)
    unit_variance: bool = True

    @model_validator(mode="after")
    def _required(self):
        need = {"uniform": ["r"], "gaussian": ["sigma"], "smoothed_wiener": ["sigma", "delta"]}
        for name in need.get(self.kind, []):
            if getattr(self, name) is None:
                raise ValueError(f"{self.kind} noise needs {name!r}")
        return self


class SimulationConfig(_Strict):
    max_steps: Optional[int] = Field(default=None, ge=1)
    T: Optional[float] = Field(default=None, gt=0)
    dt: Optional[float] = Field(default=None, gt=0)
    record_fiedler: bool = False
    stride: int = Field(default=1, ge=1)


class MonteCarloConfig(_Strict):
    trials: int = Field(default=1000, ge=1)
    confidence: float = Field(default=0.95, gt=0, lt=1)


class VariantsConfig(_Strict):
    chi_tail: Literal["standard", "paper"] = "standard"
    continuous_rate: Literal["derived", "paper"] = "derived"
    davies: Literal["paper", "derived"] = "derived"
    hypothesis_literal: bool = False


class NoiseCheckConfig(_Strict):
    paths: int = Field(default=10_000, ge=2)
    times: list[float] = Field(default_factory=lambda: [0.1, 1.0, 5.0])
    batch: int = Field(default=1000, ge=1)


class OutputConfig(_Strict):
    dir: str = "out"
    trajectory_csv: bool = True
    states_jsonl: bool = False
    noise_csv: bool = False
    trials_csv: bool = False


class RunConfig(_Strict):
    seed: int
    mode: Literal["discrete", "continuous"] = "discrete"
    params: ParamsConfig
    initial: InitialConfig
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    montecarlo: MonteCarloConfig = Field(default_factory=MonteCarloConfig)
    variants: VariantsConfig = Field(default_factory=VariantsConfig)
    noise_check: NoiseCheckConfig = Field(default_factory=NoiseCheckConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _consistent(self):
        if self.mode == "discrete" and self.params.h is None:
            raise ValueError("discrete mode needs params.h")
        if self.mode == "continuous" and self.noise.kind in ("uniform", "gaussian"):
            raise ValueError(f"{self.noise.kind} noise is only defined for discrete mode")
        if self.mode == "discrete" and self.noise.kind == "smoothed_wiener":
            raise ValueError("smoothed_wiener noise needs continuous mode")
        if self.initial.positions is not None:
            k = self.params.k
            for name in ("positions", "velocities"):
                arr = getattr(self.initial, name)
                if len(arr) != k or any(len(row) != 3 for row in arr):
                    raise ValueError(f"initial.{name} must be {k} rows of 3 numbers")
        return self

    # -- builders -----------------------------------------------------------

    def model_params(self) -> ModelParams:
        return ModelParams(**self.params.model_dump())

    def noise_model(self):
        n = self.noise
        if n.kind == "uniform":
            return UniformBall(n.r)
        if n.kind == "gaussian":
            return GaussianIID(n.sigma)
        if n.kind == "smoothed_wiener":
            return SmoothedWiener(n.sigma, n.delta, default_kernel(), n.dt_w, n.unit_variance)
        return NoNoise()

    def initial_state(self) -> tuple[np.ndarray, np.ndarray]:
        if self.initial.generator is None:
            return (as_agent_vector(self.initial.positions, "positions"),
                    as_agent_vector(self.initial.velocities, "velocities"))
        return generate_initial_state(self.params.k, self.initial.generator, self.seed)

    def variant_dict(self) -> dict:
        return self.variants.model_dump()


def _scaled_perp(rng, k: int, target: float) -> np.ndarray:
    w = rng.standard_normal((k, 3))
    w -= w.mean(axis=0)
    return w * (target / np.linalg.norm(w)) if target > 0 else np.zeros((k, 3))


def generate_initial_state(k: int, gen: GeneratorConfig, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero-mean state with prescribed dissimilarities, drawn from a dedicated stream."""
    rng = stream(seed, INIT_STREAM_KEY)
    v = _scaled_perp(rng, k, gen.v_dissimilarity)
    if gen.kind == "coincident":
        x = np.zeros((k, 3))
    else:
        x = _scaled_perp(rng, k, gen.x_dissimilarity)
    return x, v


def load_config(path) -> RunConfig:
    """Read YAML or JSON; a report file is accepted and its embedded config used."""
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        data = yaml.safe_load(text)
    if isinstance(data, dict) and "config" in data and "params" not in data:
        data = data["config"]
    return RunConfig.model_validate(data)
