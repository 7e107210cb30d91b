"""Cohort data model, file I/O and the synthetic cohort generator.

Node index everywhere downstream equals the patient's position in
``Cohort.patients`` (which is also the order in the cohort file).
"""
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import codec
from .errors import InvalidConfig, MalformedRecord, MissingFeatureVector, TooFewSamples
from .qeasl import NON_RESPONDER, RESPONDER, QeaslMeasurement, label_from_measurements
from .seeding import make_rng

LABEL_TO_CODE = {"R": RESPONDER, "NR": NON_RESPONDER}
CODE_TO_LABEL = {v: k for k, v in LABEL_TO_CODE.items()}


@dataclass(eq=False)
class Volume:
    liver: np.ndarray
    tumor: np.ndarray
    voxel_volume: float = 1.0

    def __post_init__(self):
        self.liver = np.asarray(self.liver, dtype=np.float64)
        self.tumor = np.asarray(self.tumor, dtype=np.float64)
        self.voxel_volume = float(self.voxel_volume)
        if self.liver.ndim != 3 or self.liver.shape != self.tumor.shape:
            raise MalformedRecord(
                "volume", detail=f"liver {self.liver.shape} and tumor {self.tumor.shape} must be equal 3D shapes"
            )
        if not (self.voxel_volume > 0 and math.isfinite(self.voxel_volume)):
            raise MalformedRecord("voxel_volume", detail="must be finite and > 0")
        if not (np.all(np.isfinite(self.liver)) and np.all(np.isfinite(self.tumor))):
            raise MalformedRecord("volume", detail="non-finite intensity")

    @property
    def shape(self):
        return self.liver.shape

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            np.array_equal(self.liver, other.liver)
            and np.array_equal(self.tumor, other.tumor)
            and self.voxel_volume == other.voxel_volume
        )


@dataclass(eq=False)
class PatientRecord:
    id: str
    binary_attrs: dict
    volume: Optional[Volume] = None
    feature_vector: Optional[np.ndarray] = None
    qeasl_baseline: Optional[list] = None
    qeasl_followup: Optional[list] = None
    label: Optional[int] = None

    def __post_init__(self):
        if self.feature_vector is not None:
            self.feature_vector = np.asarray(self.feature_vector, dtype=np.float64).ravel()

    def __eq__(self, other):
        if not isinstance(other, PatientRecord):
            return NotImplemented
        fa, fb = self.feature_vector, other.feature_vector
        if (fa is None) != (fb is None) or (fa is not None and not np.array_equal(fa, fb)):
            return False
        return (
            self.id == other.id
            and self.binary_attrs == other.binary_attrs
            and self.volume == other.volume
            and self.qeasl_baseline == other.qeasl_baseline
            and self.qeasl_followup == other.qeasl_followup
            and self.label == other.label
        )

    def validate(self, attr_names=()):
        pid = self.id
        if self.volume is None and self.feature_vector is None:
            raise MalformedRecord("volume", pid, "need a volume or a feature_vector")
        for name in attr_names:
            if name not in self.binary_attrs:
                raise MalformedRecord(name, pid, "attribute missing")
        for name, v in self.binary_attrs.items():
            if isinstance(v, bool) or v not in (0, 1):
                raise MalformedRecord(name, pid, f"attribute value must be 0 or 1, got {v!r}")
        if self.feature_vector is not None and not np.all(np.isfinite(self.feature_vector)):
            raise MalformedRecord("feature_vector", pid, "non-finite value")
        if self.label is not None and self.label not in (RESPONDER, NON_RESPONDER):
            raise MalformedRecord("label", pid, f"unknown label {self.label!r}")
        if self.label is not None and self.qeasl_baseline and self.qeasl_followup:
            expected = label_from_measurements(self.qeasl_baseline, self.qeasl_followup)
            if expected != self.label:
                raise MalformedRecord("label", pid, "label disagrees with qEASL measurements")


@dataclass(eq=False)
class Cohort:
    patients: list
    attr_names: list = field(default_factory=list)

    def __post_init__(self):
        self.attr_names = list(self.attr_names)
        self.validate()

    def validate(self):
        seen = set()
        for p in self.patients:
            if p.id in seen:
                raise MalformedRecord("id", p.id, "duplicate patient id")
            seen.add(p.id)
            p.validate(self.attr_names)
        dims = {p.feature_vector.size for p in self.patients if p.feature_vector is not None}
        if len(dims) > 1:
            raise MalformedRecord("feature_vector", detail=f"inconsistent lengths {sorted(dims)}")

    def __len__(self):
        return len(self.patients)

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return self.attr_names == other.attr_names and self.patients == other.patients

    @property
    def ids(self):
        return [p.id for p in self.patients]

    def labels(self) -> np.ndarray:
        """Label codes per node; -1 marks unlabelled patients."""
        return np.array([-1 if p.label is None else p.label for p in self.patients], dtype=np.int64)

    def labelled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels() >= 0)

    def attr_matrix(self, names=None) -> np.ndarray:
        names = self.attr_names if names is None else names
        return np.array(
            [[p.binary_attrs[a] for a in names] for p in self.patients], dtype=np.int64
        ).reshape(len(self.patients), len(names))

    def features(self) -> np.ndarray:
        missing = [p.id for p in self.patients if p.feature_vector is None]
        if missing:
            raise MissingFeatureVector(f"patients without feature_vector: {missing[:5]}")
        return np.vstack([p.feature_vector for p in self.patients])


# ---------------------------------------------------------------- file I/O


def _record_to_dict(p: PatientRecord) -> dict:
    d = {"id": p.id, "binary_attrs": dict(p.binary_attrs)}
    if p.feature_vector is not None:
        d["feature_vector"] = [float(v) for v in p.feature_vector]
    if p.volume is not None:
        d["volume"] = {
            "shape": list(p.volume.shape),
            "voxel_volume": p.volume.voxel_volume,
            "liver": codec.encode_array(p.volume.liver),
            "tumor": codec.encode_array(p.volume.tumor),
        }
    if p.qeasl_baseline is not None:
        d["qeasl_baseline"] = [m.to_dict() for m in p.qeasl_baseline]
    if p.qeasl_followup is not None:
        d["qeasl_followup"] = [m.to_dict() for m in p.qeasl_followup]
    d["label"] = None if p.label is None else CODE_TO_LABEL[p.label]
    return d


def _record_from_dict(d: dict) -> PatientRecord:
    pid = d.get("id")
    if not isinstance(pid, str):
        raise MalformedRecord("id", pid, "missing or non-string id")
    if not isinstance(d.get("binary_attrs"), dict):
        raise MalformedRecord("binary_attrs", pid, "missing")
    volume = None
    if d.get("volume") is not None:
        v = d["volume"]
        try:
            shape = tuple(int(s) for s in v["shape"])
            if len(shape) != 3:
                raise ValueError("shape must have 3 entries")
            volume = Volume(
                codec.decode_array(v["liver"], shape),
                codec.decode_array(v["tumor"], shape),
                v["voxel_volume"],
            )
        except MalformedRecord as e:
            raise MalformedRecord(e.field, pid, str(e)) from None
        except (KeyError, ValueError, TypeError) as e:
            raise MalformedRecord("volume", pid, str(e)) from None
    label = d.get("label")
    if label is not None:
        if label not in LABEL_TO_CODE:
            raise MalformedRecord("label", pid, f"expected 'R', 'NR' or null, got {label!r}")
        label = LABEL_TO_CODE[label]
    meas = {}
    for key in ("qeasl_baseline", "qeasl_followup"):
        if d.get(key) is not None:
            try:
                meas[key] = [QeaslMeasurement.from_dict(m) for m in d[key]]
            except (KeyError, TypeError, ValueError) as e:
                raise MalformedRecord(key, pid, str(e)) from None
    return PatientRecord(
        id=pid,
        binary_attrs=dict(d["binary_attrs"]),
        volume=volume,
        feature_vector=d.get("feature_vector"),
        qeasl_baseline=meas.get("qeasl_baseline"),
        qeasl_followup=meas.get("qeasl_followup"),
        label=label,
    )


def cohort_to_json(cohort: Cohort) -> str:
    doc = {"attr_names": list(cohort.attr_names), "patients": [_record_to_dict(p) for p in cohort.patients]}
    return json.dumps(doc, indent=1)


def cohort_from_json(text: str) -> Cohort:
    doc = json.loads(text)
    if not isinstance(doc, dict) or "patients" not in doc:
        raise MalformedRecord("patients", detail="cohort document must be an object with 'patients'")
    patients = [_record_from_dict(d) for d in doc["patients"]]
    return Cohort(patients, doc.get("attr_names", []))


def save_cohort(cohort: Cohort, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        _save_csv(cohort, path)
    else:
        path.write_text(cohort_to_json(cohort))


def load_cohort(path) -> Cohort:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _load_csv(path)
    return cohort_from_json(path.read_text())


def _save_csv(cohort: Cohort, path: Path) -> None:
    if any(p.volume is not None or p.qeasl_baseline or p.qeasl_followup for p in cohort.patients):
        raise ValueError("CSV cohorts hold only ids, attributes, feature vectors and labels")
    X = cohort.features()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", *cohort.attr_names, *[f"f{j}" for j in range(X.shape[1])], "label"])
        for p, row in zip(cohort.patients, X):
            label = "" if p.label is None else CODE_TO_LABEL[p.label]
            w.writerow([p.id, *[p.binary_attrs[a] for a in cohort.attr_names], *map(repr, map(float, row)), label])


def _load_csv(path: Path) -> Cohort:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedRecord("header", detail="empty CSV")
    header = rows[0]
    if header[0] != "id" or header[-1] != "label":
        raise MalformedRecord("header", detail="CSV must start with 'id' and end with 'label'")
    feat_cols = [i for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
    attr_cols = [i for i in range(1, len(header) - 1) if i not in feat_cols]
    attr_names = [header[i] for i in attr_cols]
    patients = []
    for row in rows[1:]:
        pid = row[0]
        if len(row) != len(header):
            raise MalformedRecord("row", pid, "wrong number of columns")
        try:
            attrs = {header[i]: int(row[i]) for i in attr_cols}
        except ValueError:
            raise MalformedRecord("binary_attrs", pid, "non-integer attribute") from None
        label = row[-1] or None
        if label is not None and label not in LABEL_TO_CODE:
            raise MalformedRecord("label", pid, f"unknown label {label!r}")
        patients.append(
            PatientRecord(
                pid,
                attrs,
                feature_vector=[float(row[i]) for i in feat_cols],
                label=None if label is None else LABEL_TO_CODE[label],
            )
        )
    return Cohort(patients, attr_names)


# ------------------------------------------------------- synthetic cohorts


@dataclass
class SynthConfig:
    n_patients: int = 120
    volume_shape: tuple = (6, 6, 6)
    latent_dim_true: int = 8
    class_balance: float = 0.5
    attr_informativeness: dict = field(default_factory=lambda: {"Cirrhosis": 0.8, "Sorafenib": 0.8})
    noise_sigma: float = 1.0
    seed: int = 0
    # distance between the two class means along the class axis (latent units)
    class_separation: float = 1.0
    # std of the remaining latent axes (anatomical variation unrelated to response)
    nuisance_scale: float = 1.0
    # draw qEASL reductions from [0.60, 0.70] and label from the measurements
    boundary: bool = False

    def validate(self):
        if int(self.n_patients) < 4:
            raise InvalidConfig("n_patients must be >= 4")
        if len(self.volume_shape) != 3 or any(int(s) < 1 for s in self.volume_shape):
            raise InvalidConfig("volume_shape must be three positive ints")
        if int(self.latent_dim_true) < 1:
            raise InvalidConfig("latent_dim_true must be >= 1")
        if not 0.0 < self.class_balance < 1.0:
            raise InvalidConfig("class_balance must lie in (0, 1)")
        for name, p in self.attr_informativeness.items():
            if not 0.0 <= p <= 1.0:
                raise InvalidConfig(f"informativeness of {name!r} must lie in [0, 1]")
        if not self.noise_sigma >= 0:
            raise InvalidConfig("noise_sigma must be >= 0")
        if not self.class_separation >= 0:
            raise InvalidConfig("class_separation must be >= 0")
        if not self.nuisance_scale >= 0:
            raise InvalidConfig("nuisance_scale must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "volume_shape" in d:
            d["volume_shape"] = tuple(d["volume_shape"])
        try:
            return cls(**d)
        except TypeError as e:
            raise InvalidConfig(str(e)) from None


_PARENCHYMA = 100.0
_VOXEL_CM3 = 0.05


def _f32(a):
    # volumes are stored as float32; keep in-memory values exactly representable
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def _measurement_triplet(rng, n_voxels, n_enhancing, voxel_volume):
    """Three repeated measurements of one scan that all count ``n_enhancing``."""
    out = []
    for _ in range(3):
        above = _PARENCHYMA + rng.uniform(5.0, 60.0, size=n_enhancing)
        below = _PARENCHYMA - rng.uniform(5.0, 60.0, size=n_voxels - n_enhancing)
        intensities = _f32(rng.permutation(np.concatenate([above, below])))
        rois = _f32(_PARENCHYMA + rng.uniform(-1.5, 1.5, size=3))
        out.append(QeaslMeasurement(intensities, tuple(rois), voxel_volume))
    return out


def generate_synthetic(cfg: SynthConfig) -> Cohort:
    """Draw a labelled cohort whose imaging, attributes and qEASL data share a class signal.

    Tumor and liver grids are linear images of a class-conditional latent
    Gaussian plus voxel noise.  Each binary attribute copies the class label
    with probability equal to its informativeness.
    """
    cfg.validate()
    n = int(cfg.n_patients)
    shape = tuple(int(s) for s in cfg.volume_shape)
    n_vox = int(np.prod(shape))
    L = int(cfg.latent_dim_true)
    rng = make_rng(cfg.seed, "synth")

    # latent axis 0 carries the class; the others are nuisance
    latent_std = np.full(L, float(cfg.nuisance_scale))
    latent_std[0] = 1.0
    map_tumor = rng.normal(size=(L, n_vox)) / math.sqrt(L)
    map_liver = rng.normal(size=(L, n_vox)) / math.sqrt(L)
    base_tumor = 60.0 + 5.0 * rng.normal(size=n_vox)
    base_liver = 40.0 + 5.0 * rng.normal(size=n_vox)

    attr_names = list(cfg.attr_informativeness)
    patients = []
    for i in range(n):
        n_tumor = int(rng.integers(200, 401))
        n_enh_base = int(rng.integers(int(0.4 * n_tumor), n_tumor + 1))
        if cfg.boundary:
            red = rng.uniform(0.60, 0.70)
        else:
            is_resp = rng.random() < cfg.class_balance
            red = rng.uniform(0.70, 0.99) if is_resp else rng.uniform(0.0, 0.60)
        n_enh_follow = int(round(n_enh_base * (1.0 - red)))
        baseline = _measurement_triplet(rng, n_tumor, n_enh_base, _VOXEL_CM3)
        followup = _measurement_triplet(rng, n_tumor, n_enh_follow, _VOXEL_CM3)
        label = label_from_measurements(baseline, followup)

        sign = 1.0 if label == RESPONDER else -1.0
        z = latent_std * rng.normal(size=L)
        z[0] += sign * 0.5 * cfg.class_separation
        tumor = base_tumor + z @ map_tumor + cfg.noise_sigma * rng.normal(size=n_vox)
        liver = base_liver + 0.5 * (z @ map_liver) + cfg.noise_sigma * rng.normal(size=n_vox)

        attrs = {}
        for name in attr_names:
            agree = rng.random() < cfg.attr_informativeness[name]
            attrs[name] = int(label if agree else 1 - label)

        patients.append(
            PatientRecord(
                id=f"P{i:04d}",
                binary_attrs=attrs,
                volume=Volume(_f32(liver).reshape(shape), _f32(tumor).reshape(shape), _VOXEL_CM3),
                qeasl_baseline=baseline,
                qeasl_followup=followup,
                label=label,
            )
        )
    return Cohort(patients, attr_names)


def stratified_kfold(cohort: Cohort, k: int, seed: int):
    """Split labelled node indices into ``k`` class-stratified folds.

    Returns a list of ``(train_idx, test_idx)`` pairs of sorted int arrays.
    """
    labels = cohort.labels()
    return stratified_kfold_labels(labels, k, seed)


def stratified_kfold_labels(labels, k: int, seed: int):
    labels = np.asarray(labels)
    if k < 2:
        raise TooFewSamples("k must be >= 2")
    rng = make_rng(seed, "kfold")
    order = []
    for c in sorted(set(labels[labels >= 0].tolist())):
        members = np.flatnonzero(labels == c)
        if members.size < k:
            raise TooFewSamples(f"class {c} has {members.size} labelled members, need >= {k}")
        order.extend(rng.permutation(members).tolist())
    if len(set(labels[labels >= 0].tolist())) < 2:
        raise TooFewSamples("need labelled members of both classes")
    # dealing one long class-ordered list round-robin keeps every fold within
    # one sample of the global class ratio and fold sizes within one of each other
    fold_of = {idx: pos % k for pos, idx in enumerate(order)}
    labelled = np.array(sorted(fold_of), dtype=np.int64)
    folds = []
    for f in range(k):
        test = np.array(sorted(i for i, g in fold_of.items() if g == f), dtype=np.int64)
        train = np.setdiff1d(labelled, test)
        folds.append((train, test))
    return folds
