from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class ModelParams:
    """Dispersion order ``alpha``, nonlinearity derivative order ``beta``,
    Sobolev index ``s``."""

    alpha: float
    beta: float
    s: float = 0.0

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must be > 1, got {self.alpha!r}")

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}
