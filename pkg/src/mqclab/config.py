"""Run configuration: a JSON file with ``network``, ``protocol``, ``analysis``,
``sweep`` and ``output`` blocks.

Unknown keys are rejected so that typos never fall back to defaults silently.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, ValidationError as PydanticValidationError, model_validator

from .errors import ConfigIoError, ConfigSyntaxError, ValidationError
from .protocols import DEFAULT_P_LIST, ProtocolConfig
from .spin_core import HARD_MAX_SPINS, SpinSystem, make_network, spin_cap

# Time unit is seconds; couplings are rad/s. d0 * tau0 = 0.05 per cycle.
DEFAULT_D0_RAD_S = 0.05 / 57.6e-6


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NetworkBlock(_Block):
    kind: Literal["chain", "lattice3d", "complete_random"]
    n_spins: int = Field(ge=1, le=HARD_MAX_SPINS)
    d0_rad_s: float = Field(default=DEFAULT_D0_RAD_S, gt=0)
    seed: int = Field(default=0, ge=0)
    angular: bool = False

    @field_validator("n_spins")
    @classmethod
    def _cap(cls, n):
        cap = spin_cap()
        if n > cap:
            raise ValueError(f"{n} exceeds the cap of {cap} (set MQCLAB_MAX_SPINS, hard cap {HARD_MAX_SPINS})")
        return n


class ProtocolBlock(_Block):
    # Prepared clusters of order 100 spins are out of reach at N <= 14; preparation is counted in cycles.
    tau0_us: float = Field(default=57.6, gt=0)
    tau_sigma_us: float = Field(default=0.0, ge=0)
    n_cycles: int = Field(default=40, ge=0)
    n0_cycles: int = Field(default=0, ge=0)
    n_phases: int | None = Field(default=None, ge=1)
    sample_every: int = Field(default=1, ge=1)
    mode: Literal["concatenated", "effective"] = "concatenated"


class AnalysisBlock(_Block):
    plateau_window: int = Field(default=10, ge=3)
    plateau_epsilon: float = Field(default=0.02, gt=0)
    dump_spectra: bool = False


class SweepBlock(_Block):
    p_list: list[float] = Field(default_factory=lambda: list(DEFAULT_P_LIST), min_length=1)
    fit: bool = False

    @model_validator(mode="after")
    def _weights(self):
        for p in self.p_list:
            if not 0 < p < 1:
                raise ValueError(f"every weight must lie in (0, 1), got {p}")
        return self


class OutputBlock(_Block):
    directory: str = "results"
    format: Literal["csv", "json"] = "csv"


class RunConfig(_Block):
    network: NetworkBlock
    protocol: ProtocolBlock = ProtocolBlock()
    analysis: AnalysisBlock = AnalysisBlock()
    sweep: SweepBlock = SweepBlock()
    output: OutputBlock = OutputBlock()

    @model_validator(mode="after")
    def _aliasing(self):
        n_phases = self.protocol.n_phases
        if n_phases is not None and n_phases <= 2 * self.network.n_spins:
            raise ValueError(
                f"protocol.n_phases={n_phases} must exceed 2*n_spins={2 * self.network.n_spins}"
            )
        return self

    def spin_system(self, seed: int | None = None) -> SpinSystem:
        net = self.network
        return make_network(
            net.kind,
            net.n_spins,
            net.d0_rad_s,
            net.seed if seed is None else seed,
            angular=net.angular,
            cap=HARD_MAX_SPINS,
        )

    def protocol_config(self) -> ProtocolConfig:
        proto = self.protocol
        return ProtocolConfig(
            tau0=proto.tau0_us * 1e-6,
            tau_sigma=proto.tau_sigma_us * 1e-6,
            n_cycles=proto.n_cycles,
            n0_cycles=proto.n0_cycles,
            n_phases=proto.n_phases,
            sample_every=proto.sample_every,
            mode=proto.mode,
        )


def _first_error(exc: PydanticValidationError) -> ValidationError:
    err = exc.errors()[0]
    path = ".".join(str(part) for part in err["loc"]) or None
    if err["type"] == "extra_forbidden":
        return ValidationError("unknown key", path)
    message = err["msg"].removeprefix("Value error, ")
    return ValidationError(message, path)


def load_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except PydanticValidationError as exc:
        raise _first_error(exc) from None


def parse_config(path: str | Path) -> RunConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigIoError(f"cannot read config: {getattr(exc, 'strerror', None) or exc}", str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}", str(path)) from None
    if not isinstance(data, dict):
        raise ValidationError("top level must be an object", str(path))
    return load_config(data)
