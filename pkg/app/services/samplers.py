"""
Random streams and one-step samplers.

Every path owns an RngStream keyed by (seed, path_index). A stream hands out
its whole noise tape for a run in one call, so the variates a path sees do
not depend on how paths are grouped into blocks or scheduled on threads.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from app.core.exceptions import AdmissibilityError, ConfigError, ValidationError
from app.models.params import CirParams, ModelKind, VasicekParams
from app.models.processes import ParamProcessKind, ParamProcessSpec


# normal columns: short-rate Brownian motion, then the two parameter noises
NORMAL_SHORT_RATE, NORMAL_PARAM_1, NORMAL_PARAM_2 = 0, 1, 2
# uniform columns: short-rate CIR scheme, parameter CIR scheme
UNIFORM_SHORT_RATE, UNIFORM_PARAM = 0, 1

N_NORMALS = 3
N_UNIFORMS = 2

SQRT3 = np.sqrt(3.0)


@dataclass
class StepNoise:
    """Variates for a run: normals (..., n_steps, 3) and uniforms (..., n_steps, 2)"""
    normals: np.ndarray
    uniforms: np.ndarray

    def at(self, n: int) -> "StepNoise":
        return StepNoise(self.normals[..., n, :], self.uniforms[..., n, :])

    @classmethod
    def stack(cls, tapes: list) -> "StepNoise":
        return cls(
            np.stack([tape.normals for tape in tapes]),
            np.stack([tape.uniforms for tape in tapes]),
        )


@dataclass
class RngStream:
    seed: int
    path_index: int
    counter: int = 0
    _generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.path_index < 0:
            raise ValidationError(f"path index must be nonnegative, got {self.path_index}")
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.path_index,))
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def normal(self, size=None) -> np.ndarray:
        self.counter += 1
        return self._generator.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        self.counter += 1
        return self._generator.random(size)

    def noise_tape(self, n_steps: int, substeps: int = 1) -> StepNoise:
        """
        Draw the path's variates on a grid `substeps` times finer than the
        simulation step. Normals are aggregated to unit variance per step,
        uniforms are taken from the first substep, so runs over the same
        horizon with different steps share their Brownian paths.
        """
        fine = n_steps * substeps
        normals = self.normal((fine, N_NORMALS))
        uniforms = self.uniform((fine, N_UNIFORMS))
        if substeps > 1:
            normals = normals.reshape(n_steps, substeps, N_NORMALS).sum(axis=1) / np.sqrt(substeps)
            uniforms = uniforms[::substeps]
        return StepNoise(normals, uniforms)


def vasicek_step_exact(
    r,
    p: VasicekParams,
    i_theta_delta,
    delta: float,
    z,
) -> np.ndarray:
    """
    Exact Gaussian transition of the Hull-White Vasicek short rate over delta.

    Args:
        r: current short rate(s)
        p: Vasicek coefficients (scalars or per-path arrays)
        i_theta_delta: trapezoid value of I(theta)(delta)
        delta: step
        z: standard normal draw(s)
    """
    if not delta > 0:
        raise ValidationError(f"step must be positive, got {delta}")
    a, beta = np.asarray(p.a, dtype=float), np.asarray(p.beta, dtype=float)
    mean = np.exp(beta * delta) * r - i_theta_delta
    variance = a / (2.0 * beta) * np.expm1(2.0 * beta * delta)
    return mean + np.sqrt(variance) * z


def _zeta(k, t):
    k = np.asarray(k, dtype=float)
    safe = np.where(k > 0, k, 1.0)
    return np.where(k > 0, -np.expm1(-safe * t) / safe, t)


def cir_transition_moments(x, a, k, sigma, t) -> Tuple[np.ndarray, np.ndarray]:
    """Exact first and second moments of dX = (a - k X) dt + sigma sqrt(X) dW after time t"""
    decay = np.exp(-np.asarray(k, dtype=float) * t)
    z = _zeta(k, t)
    m1 = x * decay + a * z
    m2 = m1 * m1 + sigma ** 2 * z * (a * z / 2.0 + x * decay)
    return m1, m2


def cir_step_alfonsi(x, a, k, sigma, dt: float, u) -> np.ndarray:
    """
    Second-order weak, nonnegative step of dX = (a - k X) dt + sigma sqrt(X) dW.

    Above the threshold the step composes the half-step drift flow, a
    three-point sqrt-diffusion kick and another half-step drift flow. Below
    it the step samples a two-point law matching the exact first two moments.
    One uniform per path selects both the kick and the two-point branch.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    k = np.asarray(k, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    u = np.asarray(u, dtype=float)

    excess = sigma ** 2 / 4.0 - a
    half_zeta = _zeta(k, dt / 2.0)
    half_decay = np.exp(-k * dt / 2.0)
    threshold = np.where(
        excess > 0,
        (1.0 / half_decay) * (
            half_zeta * excess
            + (np.sqrt(np.maximum((1.0 / half_decay) * half_zeta * excess, 0.0))
               + sigma / 2.0 * np.sqrt(3.0 * dt)) ** 2
        ),
        0.0,
    )

    kick = np.where(u < 1.0 / 6.0, -SQRT3, np.where(u > 5.0 / 6.0, SQRT3, 0.0))
    inner = np.sqrt(np.maximum(-excess * half_zeta + half_decay * x, 0.0))
    above = half_decay * (inner + sigma / 2.0 * np.sqrt(dt) * kick) ** 2 - excess * half_zeta

    m1, m2 = cir_transition_moments(x, a, k, sigma, dt)
    spread = m2 - m1 * m1
    safe_m2 = np.where(m2 > 0, m2, 1.0)
    pi = 0.5 * (1.0 - np.sqrt(np.clip(1.0 - m1 * m1 / safe_m2, 0.0, 1.0)))
    safe_pi = np.where(pi > 0, pi, 0.5)
    below = np.where(u < pi, m1 / (2.0 * safe_pi), m1 / (2.0 * (1.0 - safe_pi)))
    below = np.where(spread > 0, below, m1)
    below = np.where(m1 > 0, below, 0.0)

    return np.maximum(np.where(x >= threshold, above, below), 0.0)


def cir_step_order2(
    r,
    p: CirParams,
    theta0,
    theta_delta,
    delta: float,
    u,
    t: float = 0.0,
) -> np.ndarray:
    """
    One step of dr = (theta(t) + beta r) dt + sqrt(alpha r) dW with theta linear
    between theta0 and theta_delta over the step: exact half-step of the
    theta drift, a second-order homogeneous CIR step, the other half-step.

    t is the step start time, reported when a negative theta or rate is refused.
    """
    r = np.asarray(r, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    theta_delta = np.asarray(theta_delta, dtype=float)
    if np.any(r < 0) or np.any(theta0 < 0) or np.any(theta_delta < 0):
        worst = float(np.min(np.minimum(theta0, theta_delta)))
        raise AdmissibilityError(t=t, theta0=min(worst, float(np.min(r))))
    slope = theta_delta - theta0
    first_half = 0.5 * delta * theta0 + slope * delta / 8.0
    second_half = 0.5 * delta * theta0 + 3.0 * slope * delta / 8.0
    alpha, beta = np.asarray(p.alpha, dtype=float), np.asarray(p.beta, dtype=float)
    mid = cir_step_alfonsi(r + first_half, 0.0, -beta, np.sqrt(alpha), delta, u)
    return mid + second_half


def param_step(
    spec: ParamProcessSpec,
    y: np.ndarray,
    t: float,
    delta: float,
    noise: StepNoise,
    model: Optional[ModelKind] = None,
) -> np.ndarray:
    """
    Advance coefficient rows y = (level, beta) from t to t + delta.

    noise holds this step's variates with the path axis first.
    """
    if model is not None and ModelKind(model) is not spec.model:
        raise ConfigError(f"parameter process is for {spec.model.value}, engine runs {ModelKind(model).value}")
    if not delta > 0:
        raise ValidationError(f"step must be positive, got {delta}")
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != 2:
        raise ConfigError(f"coefficient state must have 2 components, got shape {y.shape}")

    if spec.kind is ParamProcessKind.CONSTANT:
        return y
    out = y.copy()
    if spec.kind is ParamProcessKind.RAMP:
        out[..., 0] = spec.level0 * (spec.ramp_start + spec.ramp_slope * (t + delta))
    elif spec.kind is ParamProcessKind.CIR:
        out[..., 0] = cir_step_alfonsi(
            y[..., 0], spec.cir_m, -spec.cir_mu, spec.cir_sigma, delta,
            noise.uniforms[..., UNIFORM_PARAM],
        )
    elif spec.kind is ParamProcessKind.GBM:
        z1 = noise.normals[..., NORMAL_PARAM_1]
        z2 = noise.normals[..., NORMAL_PARAM_2]
        speed = -y[..., 1] * np.exp(
            (spec.gbm_mu1 - 0.5 * spec.gbm_sigma1 ** 2) * delta + spec.gbm_sigma1 * np.sqrt(delta) * z1
        )
        out[..., 1] = -speed
        out[..., 0] = y[..., 0] * np.exp(
            (spec.gbm_mu2 - 0.5 * spec.gbm_sigma2 ** 2) * delta + spec.gbm_sigma2 * np.sqrt(delta) * z2
        )
    return out
