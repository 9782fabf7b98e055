"""Sweep reports shared by the kernel, profile and potential checks."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

BOUND_NAMES = ("k", "bxt", "kt", "kx", "envelope", "B", "Bt", "V")
CSV_COLUMNS = ("n", "x_mag", "t", "eta", "value", "bound", "ratio", "flag")

# bounds below this are treated as underflowed
TINY = 1e-290
# below this envelope decay the profile sits near the quadrature noise floor
RESOLUTION_FLOOR = 1e-10


@dataclass
class KernelPoint:
    n: int
    x_mag: float
    t: float
    eta: float
    value: float
    bound: float
    ratio: float
    flag: str = ""
    label: str = ""

    @property
    def excluded(self) -> bool:
        return bool(self.flag)


@dataclass
class BoundSweepReport:
    bound_name: str
    points: list[KernelPoint]
    empirical_C: float
    stabilized: bool
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bound_name not in BOUND_NAMES:
            raise ValueError(f"unknown bound name {self.bound_name!r}")

    @property
    def ratios(self) -> np.ndarray:
        return np.array([p.ratio for p in self.points if not p.excluded])

    def to_rows(self) -> list[tuple]:
        return [(p.n, p.x_mag, p.t, p.eta, p.value, p.bound, p.ratio, p.flag) for p in self.points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.to_rows():
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def tail_stabilized(key, ratios, split: float | None = None, tol: float = 0.01) -> bool:
    """1%-tail rule: extending the sweep past ``split`` must not raise the max by ``tol``.

    ``split`` defaults to two thirds of the largest key (eta 8 of 12).
    """
    key = np.asarray(key, float)
    ratios = np.asarray(ratios, float)
    ok = np.isfinite(ratios)
    key, ratios = key[ok], ratios[ok]
    if ratios.size == 0:
        return False
    if split is None:
        split = key.max() * 2.0 / 3.0
    head = ratios[key <= split]
    if head.size == 0:
        return False
    full = ratios.max()
    head_max = head.max()
    if head_max == 0.0:
        return full == 0.0
    return (full - head_max) / head_max < tol


def make_report(bound_name, points, split=None, header=None, tol=0.01) -> BoundSweepReport:
    used = [p for p in points if not p.excluded]
    ratios = np.array([p.ratio for p in used])
    emp = float(ratios.max()) if ratios.size else float("nan")
    stab = tail_stabilized([p.eta for p in used], ratios, split=split, tol=tol) if used else False
    return BoundSweepReport(bound_name, list(points), emp, stab, dict(header or {}))


def build_points(n, x_mag, t, eta, value, bound, label="", unresolved=False) -> list[KernelPoint]:
    """Vectorised construction; degenerate denominators are flagged, not divided.

    ``unresolved`` marks points whose value is below what the quadrature can
    resolve; they are flagged ``resolution`` and excluded like underflow.
    """
    x_mag, t, eta, value, bound, unresolved = np.broadcast_arrays(
        *(np.asarray(a, float) for a in (x_mag, t, eta, value, bound, unresolved))
    )
    pts = []
    for xm, tt, e, v, b, u in zip(x_mag.ravel(), t.ravel(), eta.ravel(), value.ravel(), bound.ravel(),
                                  unresolved.ravel()):
        if u:
            pts.append(KernelPoint(n, xm, tt, e, v, b, float("nan"), "resolution", label))
        elif not np.isfinite(v):
            pts.append(KernelPoint(n, xm, tt, e, v, b, float("nan"), "quadrature", label))
        elif not b > TINY or not np.isfinite(b):
            pts.append(KernelPoint(n, xm, tt, e, v, b, float("nan"), "underflow", label))
        else:
            pts.append(KernelPoint(n, xm, tt, e, v, b, abs(v) / b, "", label))
    return pts
