"""Proportional-integral regulators with integral-freezing anti-windup."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional


@dataclass(frozen=True)
class PIState:
    kp: float
    ki: float
    integral: float = 0.0
    output_limit: Optional[float] = None
    anti_windup: bool = True

    def __post_init__(self):
        if not math.isfinite(self.integral):
            raise ValueError("integral must be finite")
        if self.output_limit is not None and not self.output_limit > 0.0:
            raise ValueError("output_limit must be > 0")

    def raw_output(self, error: float, integral: Optional[float] = None) -> float:
        integral = self.integral if integral is None else integral
        return self.kp * error + self.ki * integral

    def clamp(self, value: float) -> float:
        if self.output_limit is None:
            return value
        return min(max(value, -self.output_limit), self.output_limit)

    def saturated(self, error: float, integral: Optional[float] = None) -> bool:
        """True when the output is clamped and more integration would push it further."""
        if self.output_limit is None or not self.anti_windup:
            return False
        raw = self.raw_output(error, integral)
        return abs(raw) > self.output_limit and raw * error > 0.0

    def integral_rate(self, error: float, integral: Optional[float] = None) -> float:
        """Continuous-time integrator input; zero while windup is being prevented."""
        return 0.0 if self.saturated(error, integral) else error


def pi_update(st: PIState, setpoint: float, measurement: float, dt: float) -> tuple:
    """One discrete step: returns ``(output, new_state)``.

    The integral advances by ``e * dt`` unless the regulator is clamped and
    the error would deepen the saturation.
    """
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    e = setpoint - measurement
    integral = st.integral + e * dt
    if st.output_limit is not None and st.anti_windup:
        if st.saturated(e, integral):
            integral = st.integral
    out = st.clamp(st.raw_output(e, integral))
    return out, replace(st, integral=integral)
