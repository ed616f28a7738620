"""Level-dependent compression tolerances."""
from dataclasses import dataclass
import math


@dataclass(frozen=True)
class ToleranceSchedule:
    """Near-field tolerance and far-field tolerances per temporal level.

    ``relative`` selects block-relative Frobenius targets for ACA; otherwise the
    values are absolute bounds on the cross norms.
    """

    epsilon: float
    gamma: int
    p: int
    h_s: float
    h_t: float
    leaf_steps: int
    levels: int
    relative: bool = True

    @property
    def near(self):
        return self.epsilon * self.h_s * math.sqrt(self.h_t) / (self.gamma * self.leaf_steps)

    def far(self, level):
        lg = math.log(self.p) if self.p > 1 else 1.0
        return (
            self.epsilon
            * 2.0**-level
            * self.h_s
            / math.sqrt(self.h_t)
            / (self.gamma * self.p * lg * (level + 1) ** 2)
        )

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "p": self.p,
            "h_s": self.h_s,
            "h_t": self.h_t,
            "relative": self.relative,
            "near": self.near,
            "far": {lv: self.far(lv) for lv in range(max(self.levels - 1, 0))},
        }


def tolerance_schedule(epsilon, gamma, p, h_s, h_t, leaf_steps, levels, relative=True):
    if min(epsilon, gamma, p, h_s, h_t, leaf_steps) <= 0:
        raise ValueError("schedule inputs must be positive")
    return ToleranceSchedule(
        float(epsilon), int(gamma), int(p), float(h_s), float(h_t), int(leaf_steps), int(levels),
        relative,
    )
