"""Enhancing-tumor volume estimation and responder labeling.

A measurement is a list of tumor voxel intensities plus three mean
intensities sampled from healthy parenchyma.  Voxels brighter than the
parenchymal reference count as enhancing.  Each time point is measured
several times and the enhancing volumes are averaged; the patient is a
responder when the averaged enhancing volume drops by strictly more than
65% from baseline to follow-up.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyList, EmptyTumor, MalformedRecord, NonPositiveBaseline

NON_RESPONDER = 0
RESPONDER = 1
RESPONSE_REDUCTION = 0.65


@dataclass(eq=False)
class QeaslMeasurement:
    tumor_intensities: np.ndarray
    roi_means: tuple
    voxel_volume: float

    def __post_init__(self):
        self.tumor_intensities = np.asarray(self.tumor_intensities, dtype=np.float64).ravel()
        self.roi_means = tuple(float(r) for r in self.roi_means)
        self.voxel_volume = float(self.voxel_volume)
        if len(self.roi_means) != 3:
            raise MalformedRecord("roi_means", detail=f"expected 3 ROI means, got {len(self.roi_means)}")
        if not self.voxel_volume > 0 or not np.isfinite(self.voxel_volume):
            raise MalformedRecord("voxel_volume", detail="must be finite and > 0")
        if not np.all(np.isfinite(self.tumor_intensities)) or not np.all(np.isfinite(self.roi_means)):
            raise MalformedRecord("tumor_intensities", detail="non-finite value")

    def __eq__(self, other):
        if not isinstance(other, QeaslMeasurement):
            return NotImplemented
        return (
            np.array_equal(self.tumor_intensities, other.tumor_intensities)
            and self.roi_means == other.roi_means
            and self.voxel_volume == other.voxel_volume
        )

    def to_dict(self):
        return {
            "tumor_intensities": [float(v) for v in self.tumor_intensities],
            "roi_means": list(self.roi_means),
            "voxel_volume": self.voxel_volume,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["tumor_intensities"], d["roi_means"], d["voxel_volume"])


@dataclass(frozen=True)
class QeaslEstimate:
    enhancing_volume: float
    total_volume: float
    fraction: float


def parenchymal_reference(roi_means: Sequence[float], k_sigma: float = 0.0) -> float:
    rois = np.asarray(roi_means, dtype=np.float64)
    return float(rois.mean() + k_sigma * rois.std())


def measure_qeasl(m: QeaslMeasurement, k_sigma: float = 0.0) -> QeaslEstimate:
    """Count enhancing voxels against the parenchymal reference intensity.

    The reference is the mean of the three ROI means, optionally raised by
    ``k_sigma`` population standard deviations of those means.
    """
    if m.tumor_intensities.size == 0:
        raise EmptyTumor("measurement has no tumor voxels")
    p = parenchymal_reference(m.roi_means, k_sigma)
    count = int(np.count_nonzero(m.tumor_intensities > p))
    total = m.tumor_intensities.size * m.voxel_volume
    enhancing = count * m.voxel_volume
    return QeaslEstimate(enhancing, total, enhancing / total)


def average_qeasl(estimates: Sequence[QeaslEstimate]) -> float:
    if len(estimates) == 0:
        raise EmptyList("no qEASL estimates to average")
    return float(np.mean([e.enhancing_volume for e in estimates]))


def reduction(baseline: float, followup: float) -> float:
    return (baseline - followup) / baseline


def responder_label(baseline: float, followup: float) -> int:
    if not baseline > 0:
        raise NonPositiveBaseline(f"baseline enhancing volume must be > 0, got {baseline}")
    if followup < 0:
        raise ValueError(f"follow-up enhancing volume must be >= 0, got {followup}")
    return RESPONDER if reduction(baseline, followup) > RESPONSE_REDUCTION else NON_RESPONDER


def label_from_measurements(baseline, followup, k_sigma: float = 0.0) -> int:
    """Average each time point's repeated measurements, then apply the responder rule."""
    b = average_qeasl([measure_qeasl(m, k_sigma) for m in baseline])
    f = average_qeasl([measure_qeasl(m, k_sigma) for m in followup])
    return responder_label(b, f)
