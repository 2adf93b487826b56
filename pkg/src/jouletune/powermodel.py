"""Fitting the load power model and steering frequency tuning with it.

The model predicts full-load power at core clock ``f`` as

    P*(f) = min(p_max, p_idle + alpha * f * v(f)^2)

with a continuous piecewise-linear voltage curve

    v(f) = v0                              for f <  tau_ft
    v(f) = v0 * (1 + beta * (f - tau_ft))  for f >= tau_ft

Voltage stays flat up to the ridge frequency ``tau_ft`` and climbs linearly
beyond it, so power grows roughly cubically above the ridge. Dividing
predicted power by frequency gives energy per unit of work; its argmin over
the supported clocks is the recommended operating point, and clocks within
a +-10% band around it are the reduced search space handed back to the
tuner. Fitting uses a Levenberg-Marquardt loop with a numerically
differentiated Jacobian; when measured voltages are available the ridge is
located directly from the flat-to-rising transition and only the power
parameters are free.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, FitError, UnderDeterminedError

# Free parameters of the full model: p_idle, p_max, alpha, tau_ft, beta, v0.
# Fitting always needs at least this many samples, whichever subset is free.
_MODEL_PARAMETER_COUNT = 6

_RIDGE_TOLERANCE = 0.01  # relative to the minimum voltage
_PLATEAU_TOLERANCE = 0.02  # relative to the maximum power
_PLATEAU_MIN_SAMPLES = 3


@dataclass(frozen=True)
class FrequencySample:
    """One sweep measurement: clock in MHz, power in W, optional voltage."""

    frequency: float
    power: float
    voltage: float | None = None


@dataclass(frozen=True)
class RidgePoint:
    frequency: float
    voltage: float


@dataclass(frozen=True)
class PowerModel:
    p_idle: float
    p_max: float
    alpha: float
    tau_ft: float
    beta: float
    v0: float = 1.0
    residual_rms: float | None = None

    def __post_init__(self):
        if self.p_idle < 0 or self.alpha <= 0 or self.beta < 0 or self.v0 <= 0:
            raise ConfigurationError(
                "power model needs p_idle >= 0, alpha > 0, beta >= 0, v0 > 0"
            )
        if self.p_max <= self.p_idle:
            raise ConfigurationError("power model needs p_max > p_idle")

    def predict_voltage(self, frequency: float) -> float:
        if frequency < self.tau_ft:
            return self.v0
        return self.v0 * (1.0 + self.beta * (frequency - self.tau_ft))

    def predict_power(self, frequency: float, voltage: float | None = None) -> float:
        v = self.predict_voltage(frequency) if voltage is None else voltage
        return min(self.p_max, self.p_idle + self.alpha * frequency * v * v)

    def to_dict(self) -> dict:
        data = {
            "p_idle": self.p_idle,
            "p_max": self.p_max,
            "alpha": self.alpha,
            "tau_ft": self.tau_ft,
            "beta": self.beta,
            "v0": self.v0,
        }
        if self.residual_rms is not None:
            data["residual_rms"] = self.residual_rms
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "PowerModel":
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(f"bad model document: {exc}") from exc


def detect_ridge(
    samples: Sequence[FrequencySample], tolerance: float = _RIDGE_TOLERANCE
) -> RidgePoint | None:
    """Locate the flat-to-rising transition in a frequency/voltage sweep.

    Returns the highest-frequency sample such that every voltage at or below
    it stays within ``tolerance`` (relative to the minimum voltage) of that
    minimum, while the next sample exceeds it. Returns None when the curve
    is flat everywhere: there is no ridge to find.
    """
    if len(samples) < 4:
        raise ConfigurationError("ridge detection needs at least 4 samples")
    ordered = sorted(samples, key=lambda s: s.frequency)
    if any(s.voltage is None for s in ordered):
        raise ConfigurationError("ridge detection needs voltages on every sample")
    voltages = [s.voltage for s in ordered]
    v_min = min(voltages)
    threshold = v_min + tolerance * v_min
    index = -1
    for i, v in enumerate(voltages):
        if v <= threshold:
            index = i
        else:
            break
    if index == len(ordered) - 1:
        return None
    rising = voltages[index + 1 :]
    if any(b < a - tolerance * v_min for a, b in zip(rising, rising[1:])):
        warnings.warn(
            "voltage is not monotone beyond the ridge; fit quality may suffer",
            stacklevel=2,
        )
    return RidgePoint(ordered[index].frequency, ordered[index].voltage)


def _split_throttled(
    samples: Sequence[FrequencySample],
) -> tuple[list[FrequencySample], list[FrequencySample]]:
    """Separate the trailing power plateau (throttled clocks) from the rest.

    A plateau is a trailing run of at least three samples whose power sits
    within a small relative tolerance of the maximum observed power; those
    clocks are capped by the device and carry no information about the
    unconstrained power curve.
    """
    ordered = sorted(samples, key=lambda s: s.frequency)
    top = max(s.power for s in ordered)
    run = 0
    for sample in reversed(ordered):
        if sample.power >= (1.0 - _PLATEAU_TOLERANCE) * top:
            run += 1
        else:
            break
    if run >= _PLATEAU_MIN_SAMPLES and run < len(ordered):
        return ordered[: len(ordered) - run], ordered[len(ordered) - run :]
    return ordered, []


def _numeric_jacobian(
    residual: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, r0: np.ndarray
) -> np.ndarray:
    jacobian = np.empty((r0.size, theta.size))
    for j in range(theta.size):
        step = 1e-6 * max(abs(theta[j]), 1e-2)
        probe = theta.copy()
        probe[j] += step
        jacobian[:, j] = (residual(probe) - r0) / step
    return jacobian


def _levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    theta0: Sequence[float],
    *,
    max_iterations: int = 200,
    initial_damping: float = 1e-3,
    rel_tolerance: float = 1e-9,
) -> tuple[np.ndarray, float]:
    """Minimize ||residual(theta)||^2; returns (theta, rms).

    Damping starts at 1e-3, grows tenfold on a rejected step and shrinks
    tenfold on an accepted one. Convergence is declared when the relative
    change of the residual norm drops below ``rel_tolerance``; running out
    of iterations without that raises FitError with the last iterate.
    """
    theta = np.asarray(theta0, dtype=float)
    r = residual(theta)
    cost = float(r @ r)
    damping = initial_damping
    for _ in range(max_iterations):
        jacobian = _numeric_jacobian(residual, theta, r)
        hessian = jacobian.T @ jacobian
        gradient = jacobian.T @ r
        scale = np.diag(np.maximum(np.diag(hessian), 1e-12))
        accepted = False
        while damping < 1e14:
            try:
                step = np.linalg.solve(hessian + damping * scale, -gradient)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            candidate = theta + step
            r_new = residual(candidate)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                accepted = True
                break
            damping *= 10.0
        if not accepted:
            # No descent direction at any damping: the iterate is stationary.
            return theta, math.sqrt(cost / r.size)
        change = abs(cost - cost_new) / max(cost, 1e-300)
        theta, r, cost = candidate, r_new, cost_new
        damping = max(damping / 10.0, 1e-12)
        if change < rel_tolerance:
            return theta, math.sqrt(cost / r.size)
    raise FitError(
        f"no convergence after {max_iterations} iterations",
        theta=theta,
        residuals=r,
    )


def fit(
    samples: Sequence[FrequencySample],
    *,
    tdp: float | None = None,
    max_iterations: int = 200,
) -> PowerModel:
    """Fit the load power model to a frequency sweep.

    Throttled samples (the trailing power plateau) are excluded and define
    ``p_max``; without a plateau ``p_max`` falls back to the TDP, or to the
    maximum observed power. With measured voltages the ridge is detected
    directly and only (p_idle, alpha) are free; without them (tau_ft, beta)
    join the free set and the voltage curve is inferred with v0 = 1.
    """
    if len(samples) < _MODEL_PARAMETER_COUNT:
        raise UnderDeterminedError(
            f"{len(samples)} samples cannot determine {_MODEL_PARAMETER_COUNT} "
            "model parameters"
        )
    active, plateau = _split_throttled(samples)
    if len(active) < _MODEL_PARAMETER_COUNT:
        raise UnderDeterminedError(
            f"only {len(active)} samples remain after excluding the throttled "
            "plateau; need at least "
            f"{_MODEL_PARAMETER_COUNT}"
        )
    if plateau:
        p_max = float(np.mean([s.power for s in plateau]))
    elif tdp is not None:
        p_max = float(tdp)
    else:
        p_max = max(s.power for s in samples)

    freqs = np.array([s.frequency for s in active])
    powers = np.array([s.power for s in active])
    have_voltages = all(s.voltage is not None for s in active)

    if have_voltages:
        model = _fit_with_voltages(active, freqs, powers, p_max, max_iterations)
    else:
        model = _fit_without_voltages(freqs, powers, p_max, max_iterations)
    return model


def _initial_p_idle(powers: np.ndarray) -> float:
    return 0.9 * float(np.min(powers))


def _fit_with_voltages(
    active: Sequence[FrequencySample],
    freqs: np.ndarray,
    powers: np.ndarray,
    p_max: float,
    max_iterations: int,
) -> PowerModel:
    volts = np.array([s.voltage for s in active])
    ridge = detect_ridge(active)
    if ridge is None:
        # Flat voltage everywhere: no rising segment to constrain beta.
        warnings.warn(
            "voltage is flat across the sweep; fixing beta to 0", stacklevel=3
        )
        v0 = float(np.mean(volts))
        tau_ft = float(freqs[-1])
        beta = 0.0
    else:
        flat = volts[freqs <= ridge.frequency]
        v0 = float(np.mean(flat))
        above = freqs > ridge.frequency
        if int(np.count_nonzero(above)) >= 2:
            # v = slope * f + intercept on the rising side; the ridge is where
            # the line crosses v0, which recovers tau_ft between grid points.
            slope, intercept = np.polyfit(freqs[above], volts[above], 1)
            beta = float(slope / v0)
            crossing = (v0 - intercept) / slope if slope > 0 else ridge.frequency
            tau_ft = float(min(max(crossing, freqs[0]), freqs[-1]))
        else:
            f_up = float(freqs[above][0])
            v_up = float(volts[above][0])
            tau_ft = float(ridge.frequency)
            beta = (v_up / v0 - 1.0) / (f_up - tau_ft)

    def residual(theta: np.ndarray) -> np.ndarray:
        p_idle, alpha = theta
        return p_idle + alpha * freqs * volts**2 - powers

    p_idle0 = _initial_p_idle(powers)
    flat_mask = freqs < (tau_ft if ridge is not None else np.inf)
    alpha0 = _flat_region_slope(freqs, powers, flat_mask) / (v0 * v0)
    theta, rms = _levenberg_marquardt(
        residual, [p_idle0, alpha0], max_iterations=max_iterations
    )
    p_idle, alpha = float(theta[0]), float(theta[1])
    return PowerModel(
        p_idle=max(p_idle, 0.0),
        p_max=max(p_max, p_idle + 1e-9),
        alpha=alpha,
        tau_ft=tau_ft,
        beta=beta,
        v0=v0,
        residual_rms=rms,
    )


def _flat_region_slope(freqs: np.ndarray, powers: np.ndarray, mask: np.ndarray) -> float:
    """Least-squares slope of power over frequency in the flat-voltage region."""
    if int(np.count_nonzero(mask)) < 2:
        mask = np.ones_like(mask, dtype=bool)
    slope, _ = np.polyfit(freqs[mask], powers[mask], 1)
    return max(float(slope), 1e-9)


def _fit_without_voltages(
    freqs: np.ndarray,
    powers: np.ndarray,
    p_max: float,
    max_iterations: int,
) -> PowerModel:
    def residual(theta: np.ndarray) -> np.ndarray:
        p_idle, alpha, tau_ft, beta = theta
        v = np.where(freqs < tau_ft, 1.0, 1.0 + beta * (freqs - tau_ft))
        return p_idle + alpha * freqs * v * v - powers

    lower_half = freqs <= np.median(freqs)
    theta0 = [
        _initial_p_idle(powers),
        _flat_region_slope(freqs, powers, lower_half),
        float(0.5 * (freqs[0] + freqs[-1])),
        1e-3,
    ]
    theta, rms = _levenberg_marquardt(
        residual, theta0, max_iterations=max_iterations
    )
    p_idle, alpha, tau_ft, beta = (float(x) for x in theta)
    if tau_ft >= freqs[-1] or beta <= 0:
        # The rising segment never materialized: the sweep stayed below the
        # voltage threshold, so refit the flat model and pin beta.
        warnings.warn(
            "no voltage rise detected in the sweep; fixing beta to 0", stacklevel=3
        )
        coeffs = np.polyfit(freqs, powers, 1)
        alpha, p_idle = float(coeffs[0]), float(coeffs[1])
        tau_ft, beta = float(freqs[-1]), 0.0
        rms = float(np.sqrt(np.mean((p_idle + alpha * freqs - powers) ** 2)))
    return PowerModel(
        p_idle=max(p_idle, 0.0),
        p_max=max(p_max, p_idle + 1e-9),
        alpha=alpha,
        tau_ft=tau_ft,
        beta=max(beta, 0.0),
        v0=1.0,
        residual_rms=rms,
    )


def optimal_frequency(model: PowerModel, grid: Sequence[float]) -> float:
    """The grid clock minimizing predicted energy per unit of work, P*(f)/f.

    Ties break toward the higher frequency: equal energy at more speed.
    """
    if not grid:
        raise ConfigurationError("empty frequency grid")
    best = None
    best_energy = math.inf
    for f in grid:
        if f <= 0:
            raise ConfigurationError(f"non-positive frequency {f} in grid")
        energy = model.predict_power(f) / f
        if energy < best_energy or (energy == best_energy and (best is None or f > best)):
            best, best_energy = f, energy
    return best


@dataclass(frozen=True)
class FrequencyBand:
    clocks: tuple[float, ...]
    reduction: float


def frequency_band(
    f_opt: float, supported: Sequence[float], pct: float = 0.10
) -> FrequencyBand:
    """Supported clocks within +-pct of the recommended frequency.

    Never empty: if no supported clock falls inside the band, the nearest
    one is returned (ties toward the higher clock). The reduction is the
    fraction of the supported grid that steering discards.
    """
    if not supported:
        raise ConfigurationError("empty supported clock list")
    if not 0 <= pct < 1:
        raise ConfigurationError(f"pct must be in [0, 1), got {pct}")
    ordered = sorted(supported)
    low, high = f_opt * (1.0 - pct), f_opt * (1.0 + pct)
    clocks = tuple(c for c in ordered if low <= c <= high)
    if not clocks:
        nearest = min(ordered, key=lambda c: (abs(c - f_opt), -c))
        clocks = (nearest,)
    reduction = 1.0 - len(clocks) / len(ordered)
    return FrequencyBand(clocks, reduction)


# -- sweep CSV I/O -----------------------------------------------------------

def read_samples_csv(path: str | Path) -> list[FrequencySample]:
    """Read a sweep CSV with columns frequency_mhz, power_w[, voltage_v]."""
    try:
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None or not {
                "frequency_mhz",
                "power_w",
            } <= set(reader.fieldnames):
                raise ConfigurationError(
                    f"{path} must have columns frequency_mhz, power_w[, voltage_v]"
                )
            samples = []
            for row in reader:
                voltage = row.get("voltage_v")
                samples.append(
                    FrequencySample(
                        frequency=float(row["frequency_mhz"]),
                        power=float(row["power_w"]),
                        voltage=float(voltage) if voltage not in (None, "") else None,
                    )
                )
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"bad numeric value in {path}: {exc}") from exc
    return samples


def write_samples_csv(samples: Sequence[FrequencySample], path: str | Path) -> None:
    with_voltage = any(s.voltage is not None for s in samples)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        header = ["frequency_mhz", "power_w"] + (["voltage_v"] if with_voltage else [])
        writer.writerow(header)
        for s in samples:
            row = [f"{s.frequency:.6g}", f"{s.power:.6f}"]
            if with_voltage:
                row.append("" if s.voltage is None else f"{s.voltage:.6f}")
            writer.writerow(row)


def model_to_json(model: PowerModel, path: str | Path) -> None:
    with open(path, "w") as handle:
        json.dump(model.to_dict(), handle, indent=2)
        handle.write("\n")


def model_from_json(path: str | Path) -> PowerModel:
    """Load a model from a JSON file.

    Accepts either a bare parameter object or a fit report that nests the
    parameters under a ``model`` key.
    """
    try:
        with open(path) as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot load model from {path}: {exc}") from exc
    if isinstance(data, dict) and isinstance(data.get("model"), dict):
        data = data["model"]
    return PowerModel.from_dict(data)
