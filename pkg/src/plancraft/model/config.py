"""Planner model configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..twohot import DEFAULT_SPEED_BINS, validate_bins

HEAD_KINDS = ("wps", "path", "pwp")
GENERATORS = ("gru_single", "gru_multi", "linear")


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 256
    n_layers: int = 4
    n_heads: int = 8
    ffn_mult: int = 4
    head_kind: str = "pwp"
    generator: str = "linear"
    speed_bins: tuple = DEFAULT_SPEED_BINS
    include_ego_speed: bool = False   # off: the planner never sees ego velocity

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"head_kind must be one of {HEAD_KINDS}")
        if self.generator not in GENERATORS:
            raise ValueError(f"generator must be one of {GENERATORS}")
        validate_bins(self.speed_bins)
        object.__setattr__(self, "speed_bins", tuple(float(b) for b in self.speed_bins))

    @property
    def predicts_path(self) -> bool:
        return self.head_kind in ("path", "pwp")

    @property
    def predicts_waypoints(self) -> bool:
        return self.head_kind in ("wps", "pwp")

    @property
    def predicts_speed(self) -> bool:
        return self.head_kind == "path"

    def to_json(self) -> dict:
        return {
            "d_model": self.d_model, "n_layers": self.n_layers,
            "n_heads": self.n_heads, "ffn_mult": self.ffn_mult,
            "head_kind": self.head_kind, "generator": self.generator,
            "speed_bins": list(self.speed_bins),
            "include_ego_speed": self.include_ego_speed,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ModelConfig":
        return cls(
            d_model=int(payload["d_model"]), n_layers=int(payload["n_layers"]),
            n_heads=int(payload["n_heads"]), ffn_mult=int(payload.get("ffn_mult", 4)),
            head_kind=payload["head_kind"], generator=payload["generator"],
            speed_bins=tuple(payload["speed_bins"]),
            include_ego_speed=bool(payload.get("include_ego_speed", False)),
        )


MINI_CONFIG = ModelConfig(d_model=16, n_layers=1, n_heads=2, ffn_mult=2)
