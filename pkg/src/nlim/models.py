"""Model containers (linear and quadratic) and their JSON wire format."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensors import QuadTensor, quad_drift

WHITE = "white"
COLORED = "colored"

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class NoiseSpec:
    """Stochastic forcing: Gaussian white noise, or OU colored noise with
    correlation time gamma (same time units as the dynamics)."""

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in (WHITE, COLORED):
            raise ValueError(f"noise kind must be {WHITE!r} or {COLORED!r}, got {self.kind!r}")
        if self.kind == COLORED:
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("colored noise requires gamma > 0")
            object.__setattr__(self, "gamma", float(self.gamma))
        elif self.gamma is not None:
            raise ValueError("white noise carries no gamma parameter")

    @classmethod
    def white(cls) -> "NoiseSpec":
        return cls(WHITE)

    @classmethod
    def colored(cls, gamma: float) -> "NoiseSpec":
        return cls(COLORED, gamma)

    @property
    def is_colored(self) -> bool:
        return self.kind == COLORED


@dataclass
class LinModel:
    """Linear stochastic model dx/dt = A x + sqrt(2Q) * noise."""

    A: np.ndarray
    Q: np.ndarray
    noise: NoiseSpec
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        if self.A.shape != self.Q.shape or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A and Q must be square matrices of equal size")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def is_dissipative(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.A).real < 0))

    def as_quad(self) -> "QuadModel":
        return QuadModel(
            B=QuadTensor.zeros(self.n),
            A=self.A,
            C=np.zeros(self.n),
            Q=self.Q,
            noise=self.noise,
            info=dict(self.info),
        )


@dataclass
class QuadModel:
    """Quadratic stochastic model dx_i/dt = [B x^2]_i + [A x]_i + C_i + noise."""

    B: QuadTensor
    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    noise: NoiseSpec
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        n = self.B.n
        if self.A.shape != (n, n) or self.C.shape != (n,) or self.Q.shape != (n, n):
            raise ValueError("inconsistent model dimensions")

    @property
    def n(self) -> int:
        return self.B.n

    def drift(self, x) -> np.ndarray:
        return quad_drift(self.B.data, self.A, self.C, x)


def full_drift(model, x) -> np.ndarray:
    """Deterministic right-hand side of a model at state x (vectorized)."""
    if isinstance(model, LinModel):
        model = model.as_quad()
    return model.drift(x)


def model_kind(model) -> str:
    base = "nlim" if isinstance(model, QuadModel) else "lim"
    return f"{model.noise.kind}-{base}"


def model_to_dict(model, provenance=None) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "kind": model_kind(model),
        "n": model.n,
        "A": model.A.tolist(),
        "Q": model.Q.tolist(),
    }
    if isinstance(model, QuadModel):
        d["B"] = model.B.data.tolist()
        d["C"] = model.C.tolist()
    if model.noise.is_colored:
        d["gamma"] = model.noise.gamma
    if provenance is not None:
        d["provenance"] = provenance
    return d


def model_from_dict(d: dict):
    kind = d["kind"]
    n = int(d["n"])
    if kind.endswith("-lim") and "B" not in d:
        noise = _noise_from_kind(kind, d)
        return LinModel(A=np.array(d["A"], dtype=float), Q=np.array(d["Q"], dtype=float), noise=noise)
    noise = _noise_from_kind(kind, d)
    B = QuadTensor(n, np.array(d.get("B", np.zeros((n, n * (n + 1) // 2)).tolist()), dtype=float))
    C = np.array(d.get("C", [0.0] * n), dtype=float)
    return QuadModel(B=B, A=np.array(d["A"], dtype=float), C=C, Q=np.array(d["Q"], dtype=float), noise=noise)


def _noise_from_kind(kind: str, d: dict) -> NoiseSpec:
    if kind.startswith("colored-"):
        return NoiseSpec.colored(float(d["gamma"]))
    if kind.startswith("white-"):
        return NoiseSpec.white()
    raise ValueError(f"unknown model kind {kind!r}")
