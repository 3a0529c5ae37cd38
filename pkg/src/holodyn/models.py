"""Catalog of time-dependent Hamiltonians and run configuration.

Pauli conventions: sigma_z = diag(1, -1), sigma_x has unit off-diagonals,
sigma_y = [[0, -i], [i, 0]].

Model formulas (hbar = 1):

``zero``
    H = 0.
``static_diagonal``
    H = diag(d1, ..., dN).
``spin_half_rotating``
    H = (omega0/2) sz + (omega1/2) (sx cos(omega t) + sy sin(omega t)).
``tripod_dark``
    Levels 0, 1, 2 are ground states, level 3 is excited.
    H = delta |3><3| + sum_i (Omega_i(t) |3><i| + h.c.) with
    Omega_i(t) = sum_n (a{i}_{n} + i b{i}_{n}) exp(i n nu t), n = 0..K.
    The default initial frame is the pair of dark states of H(0).
``random_smooth``
    H = A + B cos(nu t) + C sin(nu t); A, B, C are (G + G^dagger)/2 with G
    complex Gaussian, drawn in that order from
    ``numpy.random.default_rng(seed)`` (PCG64) and multiplied by ``scale``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import linalg
from .errors import (
    ConfigError,
    DegeneracyError,
    DimensionError,
    FrameSpecError,
    MissingParameterError,
    NonHermitianError,
    NumericError,
    UnknownModelError,
    ValidationError,
)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

MODEL_NAMES = ("zero", "static_diagonal", "spin_half_rotating", "tripod_dark", "random_smooth")

DEFAULT_TOLERANCES = {"identity": 1e-12, "ode": "auto", "factorization": "auto"}
DEFAULT_FLAGS = {
    "repolarize_holonomy": False,
    "reorthonormalize_every": 50,
    # negative-control test hooks
    "reverse_holonomy_order": False,
    "reverse_dynamic_order": False,
}

_TRIPOD_KEY = re.compile(r"^([ab])([123])_(\d+)$")


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    name: str
    dim: int
    params: dict = field(default_factory=dict)
    frame_spec: object = None
    matrices: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise UnknownModelError(f"unknown model {self.name!r}; expected one of {MODEL_NAMES}")
        if not isinstance(self.dim, int) or isinstance(self.dim, bool) or self.dim < 1:
            raise ValidationError(f"dim must be a positive integer, got {self.dim!r}")
        if self.dim > 64:
            raise ValidationError("dim must be <= 64")
        params = {k: float(v) for k, v in self.params.items()}
        object.__setattr__(self, "params", params)
        getattr(self, f"_setup_{self.name}")()

    def _require(self, *names):
        for name in names:
            if name not in self.params:
                raise MissingParameterError(f"model {self.name!r} requires parameter {name!r}")
            if not math.isfinite(self.params[name]):
                raise ValidationError(f"parameter {name!r} must be finite")

    def _require_dim(self, dim):
        if self.dim != dim:
            raise ValidationError(f"model {self.name!r} requires dim = {dim}, got {self.dim}")

    def _setup_zero(self):
        pass

    def _setup_static_diagonal(self):
        self._require(*(f"d{j + 1}" for j in range(self.dim)))
        diag = np.array([self.params[f"d{j + 1}"] for j in range(self.dim)])
        object.__setattr__(self, "_diag", diag)

    def _setup_spin_half_rotating(self):
        self._require_dim(2)
        self._require("omega0", "omega1", "omega")

    def _setup_tripod_dark(self):
        self._require_dim(4)
        self._require("nu")
        coeffs = {}
        for key, value in self.params.items():
            m = _TRIPOD_KEY.match(key)
            if m:
                part, laser, n = m.group(1), int(m.group(2)) - 1, int(m.group(3))
                coeffs.setdefault(n, np.zeros(3, dtype=complex))
                coeffs[n][laser] += value if part == "a" else 1j * value
        if not coeffs:
            raise MissingParameterError(
                "model 'tripod_dark' requires Fourier coefficients a{i}_{n} / b{i}_{n}"
            )
        harmonics = np.array(sorted(coeffs))
        object.__setattr__(self, "_harmonics", harmonics)
        object.__setattr__(self, "_coeffs", np.array([coeffs[n] for n in harmonics]))

    def _setup_random_smooth(self):
        self._require("nu")
        seed = int(self.params.get("seed", 0))
        scale = self.params.get("scale", 1.0)
        rng = np.random.default_rng(seed)
        terms = {}
        for key in ("A", "B", "C"):
            drawn = linalg.random_hermitian(rng, self.dim, scale)
            if key in self.matrices:
                m = np.asarray(self.matrices[key], dtype=complex)
                if m.shape != (self.dim, self.dim):
                    raise DimensionError(f"matrix {key} must be {self.dim}x{self.dim}")
                if not linalg.is_hermitian(m):
                    raise NonHermitianError(f"explicit matrix {key} is not Hermitian")
                drawn = m
            terms[key] = drawn
        object.__setattr__(self, "_terms", terms)

    def laser_amplitudes(self, t):
        """Tripod couplings (Omega_1, Omega_2, Omega_3) at scalar or array ``t``."""
        t = np.asarray(t, dtype=float)
        phases = np.exp(1j * self.params["nu"] * np.multiply.outer(t, self._harmonics))
        return phases @ self._coeffs


def hamiltonians(model: HamiltonianModel, times):
    """Stack of H(t) for each entry of ``times``; shape ``(len(times), N, N)``."""
    t = np.asarray(times, dtype=float)
    if not np.all(np.isfinite(t)):
        raise NumericError("time must be finite")
    n = model.dim
    out = np.zeros(t.shape + (n, n), dtype=complex)
    p = model.params
    if model.name == "static_diagonal":
        out[...] = np.diag(model._diag)
    elif model.name == "spin_half_rotating":
        wt = p["omega"] * t
        out += 0.5 * p["omega0"] * SIGMA_Z
        out += 0.5 * p["omega1"] * (np.multiply.outer(np.cos(wt), SIGMA_X)
                                     + np.multiply.outer(np.sin(wt), SIGMA_Y))
    elif model.name == "tripod_dark":
        omegas = model.laser_amplitudes(t)
        out[..., 3, :3] = omegas
        out[..., :3, 3] = np.conj(omegas)
        out[..., 3, 3] = p.get("delta", 0.0)
    elif model.name == "random_smooth":
        a, b, c = (model._terms[k] for k in "ABC")
        nt = p["nu"] * t
        out += a
        out += np.multiply.outer(np.cos(nt), b) + np.multiply.outer(np.sin(nt), c)
    return out


def hamiltonian_at(model: HamiltonianModel, t: float):
    if not math.isfinite(t):
        raise NumericError("time must be finite")
    return hamiltonians(model, float(t))


def reference_propagator(model: HamiltonianModel, t: float):
    """Closed-form full-space propagator U(t), or ``None`` if none is known.

    For ``spin_half_rotating`` the rotating frame R(t) = exp(-i omega t sz/2)
    turns H into the static H' = (omega0 - omega) sz/2 + omega1 sx/2, so
    U(t) = R(t) exp(-i H' t).
    """
    if not math.isfinite(t):
        raise NumericError("time must be finite")
    n = model.dim
    if model.name == "zero":
        return np.eye(n, dtype=complex)
    if model.name == "static_diagonal":
        return np.diag(np.exp(-1j * model._diag * t))
    if model.name == "spin_half_rotating":
        p = model.params
        frame = np.diag(np.exp(-0.5j * p["omega"] * t * np.array([1.0, -1.0])))
        static = 0.5 * (p["omega0"] - p["omega"]) * SIGMA_Z + 0.5 * p["omega1"] * SIGMA_X
        return frame @ linalg.matrix_exponential(-1j * static * t)
    return None


def dark_states(model: HamiltonianModel):
    """Orthonormal dark states of the tripod at t = 0, embedded in C^4."""
    omega0 = model.laser_amplitudes(0.0)
    if np.linalg.norm(omega0) < 1e-12:
        raise FrameSpecError("tripod dark states need a nonzero coupling at t = 0")
    # H(0)|d> = (sum_i Omega_i d_i)|3>: null space of the 1x3 row Omega(0)
    _, _, vh = np.linalg.svd(omega0[None, :])
    null = np.conj(vh[1:]).T
    cols = np.zeros((4, 2), dtype=complex)
    cols[:3] = null
    return linalg.reorthonormalize(cols)


def _parse_vector(raw, dim):
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FrameSpecError(f"frame vector {raw!r} is not a list of [re, im] pairs") from exc
    if arr.shape != (dim, 2):
        raise FrameSpecError(f"frame vector must have {dim} [re, im] pairs, got shape {arr.shape}")
    return arr[:, 0] + 1j * arr[:, 1]


def initial_frame(model: HamiltonianModel) -> linalg.Frame:
    spec = model.frame_spec
    if spec is None or spec == "dark":
        if model.name == "tripod_dark":
            return dark_states(model)
        raise FrameSpecError(f"model {model.name!r} needs an explicit frame")
    if not isinstance(spec, (list, tuple)) or not spec:
        raise FrameSpecError("frame must be a non-empty list")
    if all(isinstance(x, int) and not isinstance(x, bool) for x in spec):
        if len(set(spec)) != len(spec) or min(spec) < 0 or max(spec) >= model.dim:
            raise FrameSpecError(f"frame indices {spec} must be distinct and in [0, {model.dim})")
        cols = np.eye(model.dim, dtype=complex)[:, list(spec)]
        return linalg.Frame(cols)
    cols = np.stack([_parse_vector(v, model.dim) for v in spec], axis=1)
    if cols.shape[1] > model.dim:
        raise FrameSpecError("more frame vectors than dimensions")
    try:
        return linalg.reorthonormalize(cols)
    except DegeneracyError as exc:
        raise FrameSpecError(f"frame vectors cannot be orthonormalized: {exc}") from exc


@dataclass(frozen=True, eq=False)
class ModelConfig:
    model: HamiltonianModel
    t_final: float
    steps: int
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    flags: dict = field(default_factory=lambda: dict(DEFAULT_FLAGS))

    @property
    def dt(self) -> float:
        return self.t_final / self.steps

    def with_steps(self, steps: int) -> "ModelConfig":
        return replace(self, steps=steps)

    def with_flags(self, **flags) -> "ModelConfig":
        return replace(self, flags={**self.flags, **flags})

    def to_dict(self):
        """Plain-data echo of the configuration (for reports)."""
        m = self.model
        return {
            "model": {
                "name": m.name,
                "dim": m.dim,
                "params": dict(sorted(m.params.items())),
                "frame": m.frame_spec,
            },
            "run": {
                "t_final": self.t_final,
                "steps": self.steps,
                "tolerances": dict(self.tolerances),
                "flags": dict(self.flags),
            },
        }


def _complex_matrix(raw, key):
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValidationError(f"matrix {key} must be a nested list of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _positive_tolerance(name, value):
    if value == "auto" and name != "identity":
        return value
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"tolerance {name!r} must be a positive number") from exc
    if not value > 0:
        raise ValidationError(f"tolerance {name!r} must be > 0")
    return value


def config_from_dict(doc: dict, seed_override=None) -> ModelConfig:
    """Validate a parsed config document and apply defaults.

    Both the nested layout (``model: {name, dim, params, frame}``,
    ``run: {t_final, steps, tolerances, flags}``) and the flat layout
    (``model: <name>``, ``dim``, ``t_final``, ... at top level) are accepted.
    """
    if not isinstance(doc, dict):
        raise ValidationError("config document must be a mapping")
    if isinstance(doc.get("model"), dict):
        mdoc = doc["model"]
        rdoc = doc.get("run", {}) or {}
    else:
        mdoc = {"name": doc.get("model"), **doc}
        rdoc = doc
    if not isinstance(mdoc, dict) or not isinstance(rdoc, dict):
        raise ValidationError("'model' and 'run' must be mappings")

    name = mdoc.get("name")
    if name is None:
        raise MissingParameterError("model name is required")
    if name not in MODEL_NAMES:
        raise UnknownModelError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    if "dim" not in mdoc:
        raise MissingParameterError("model dim is required")
    dim = mdoc["dim"]

    params = dict(mdoc.get("params", {}) or {})
    if isinstance(params.get("d"), list):
        params.update({f"d{j + 1}": v for j, v in enumerate(params.pop("d"))})
    if seed_override is not None:
        params["seed"] = int(seed_override)
    for key, value in params.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"parameter {key!r} must be a real number")
    matrices = {k: _complex_matrix(v, k) for k, v in (mdoc.get("matrices", {}) or {}).items()}
    model = HamiltonianModel(name, dim, params, mdoc.get("frame"), matrices)
    initial_frame(model)

    for key in ("t_final", "steps"):
        if key not in rdoc:
            raise MissingParameterError(f"run.{key} is required")
    steps = rdoc["steps"]
    if isinstance(steps, bool) or not isinstance(steps, int):
        raise ValidationError("steps must be an integer")
    if steps < 1:
        raise ValidationError("steps must be ≥ 1")
    t_final = rdoc["t_final"]
    if isinstance(t_final, bool) or not isinstance(t_final, (int, float)) or not math.isfinite(t_final):
        raise ValidationError("t_final must be a finite number")
    if t_final < 0:
        raise ValidationError("t_final must be ≥ 0")

    tolerances = dict(DEFAULT_TOLERANCES)
    for key, value in (rdoc.get("tolerances", {}) or {}).items():
        if key not in DEFAULT_TOLERANCES:
            raise ValidationError(f"unknown tolerance {key!r}")
        tolerances[key] = _positive_tolerance(key, value)
    flags = dict(DEFAULT_FLAGS)
    for key, value in (rdoc.get("flags", {}) or {}).items():
        if key not in DEFAULT_FLAGS:
            raise ValidationError(f"unknown flag {key!r}")
        flags[key] = value
    k = flags["reorthonormalize_every"]
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ValidationError("reorthonormalize_every must be an integer ≥ 1")
    return ModelConfig(model, float(t_final), steps, tolerances, flags)


def parse_config(text: str, seed_override=None) -> ModelConfig:
    """Parse a YAML (or JSON) config document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config document: {exc}") from exc
    return config_from_dict(doc, seed_override)


def load_config(path, seed_override=None) -> ModelConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), seed_override)
