"""Cohort containers, the on-disk dataset format, and a synthetic generator.

Dataset directory layout::

    subjects.csv          header ``id,fiq,viq``
    matrices/<id>.csv     d rows of d comma-separated values
    roi_names.csv         optional, header ``index,name``
    truth.json            optional sidecar written by the synthetic generator
"""

import csv
import json
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SynthSpec
from .errors import ValidationError
from .spd import PSD_TOL, expm, symmetrize

log = logging.getLogger(__name__)

ASYMMETRY_WARN = 1e-8
FLOAT_FMT = "%.17g"


def worker_count():
    """Thread cap from ``CONNSELECT_THREADS`` (default: CPU count)."""
    raw = os.environ.get("CONNSELECT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValidationError(f"CONNSELECT_THREADS must be an integer, got {raw!r}")
    return os.cpu_count() or 1


@dataclass
class Subject:
    id: str
    connectome: np.ndarray
    fiq: float
    viq: float

    def score(self, target):
        if target not in ("fiq", "viq"):
            raise ValidationError(f"unknown target {target!r}")
        return self.fiq if target == "fiq" else self.viq


@dataclass
class Dataset:
    subjects: list
    roi_names: list | None = None
    truth: dict | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.subjects)

    def __getitem__(self, i):
        return self.subjects[i]

    @property
    def dim(self):
        return self.subjects[0].connectome.shape[0]

    @property
    def ids(self):
        return [s.id for s in self.subjects]

    def scores(self, target):
        return np.array([s.score(target) for s in self.subjects])

    def subset(self, indices):
        return Dataset([self.subjects[i] for i in indices], self.roi_names)


def connectome_issues(C):
    """Correlation-form violations of a symmetric matrix, as short labels."""
    issues = []
    if np.any(np.abs(C) > 1.0 + 1e-8):
        issues.append("entries outside [-1, 1]")
    if not np.allclose(np.diag(C), 1.0, atol=1e-8):
        issues.append("diagonal not all ones")
    if float(np.linalg.eigvalsh(C)[0]) < -PSD_TOL:
        issues.append(f"not positive semidefinite (min eigenvalue below {-PSD_TOL:g})")
    return issues


def validate_connectome(C, source="connectome", warn=True):
    """Symmetrize ``C`` and check that it looks like a correlation matrix.

    Asymmetry above 1e-8, entries outside [-1, 1], a non-unit diagonal and a
    smallest eigenvalue below -1e-8 are reported but do not abort. Returns
    ``(C, issues)``; with ``warn`` each issue is also emitted as a warning.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError(f"{source}: matrix must be square, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValidationError(f"{source}: non-finite value")
    issues = []
    asym = float(np.max(np.abs(C - C.T)))
    if asym > ASYMMETRY_WARN:
        issues.append("asymmetric (symmetrized)")
    C = symmetrize(C)
    issues += connectome_issues(C)
    if warn:
        for issue in issues:
            warnings.warn(f"{source}: {issue}", stacklevel=2)
    return C, issues


def _read_matrix(path):
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: unparseable value ({exc})") from exc
            if not all(np.isfinite(values)):
                raise ValidationError(f"{path}:{lineno}: non-finite value")
            rows.append((lineno, values))
    if not rows:
        raise ValidationError(f"{path}: empty matrix file")
    d = len(rows)
    for lineno, values in rows:
        if len(values) != d:
            raise ValidationError(
                f"{path}:{lineno}: ragged matrix, row has {len(values)} values, expected {d}"
            )
    return np.array([v for _, v in rows])


def _read_subjects(path):
    if not path.exists():
        raise ValidationError(f"missing {path}")
    entries = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader, [])]
        if header[:3] != ["id", "fiq", "viq"]:
            raise ValidationError(f"{path}:1: expected header id,fiq,viq, got {','.join(header)}")
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            sid = row[0].strip()
            if sid in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate id {sid!r}")
            seen.add(sid)
            try:
                fiq, viq = float(row[1]), float(row[2])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: unparseable score ({exc})") from exc
            if not (np.isfinite(fiq) and np.isfinite(viq)):
                raise ValidationError(f"{path}:{lineno}: non-finite score")
            entries.append((sid, fiq, viq))
    if not entries:
        raise ValidationError(f"{path}: no subjects")
    return entries


def _read_roi_names(path):
    names = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                names[int(row[0])] = row[1].strip()
            except (ValueError, IndexError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad ROI name row") from exc
    return [names.get(i, str(i)) for i in range(max(names) + 1)] if names else None


def load_dataset(path):
    """Load and validate a dataset directory; subjects are sorted by id."""
    root = Path(path)
    if not root.is_dir():
        raise ValidationError(f"dataset directory {root} does not exist")
    entries = sorted(_read_subjects(root / "subjects.csv"))
    files = [root / "matrices" / f"{sid}.csv" for sid, _, _ in entries]
    for f in files:
        if not f.exists():
            raise ValidationError(f"missing matrix file {f}")
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        mats = list(pool.map(_read_matrix, files))
    d = mats[0].shape[0]
    subjects = []
    problems = {}
    for (sid, fiq, viq), f, M in zip(entries, files, mats):
        if M.shape[0] != d:
            raise ValidationError(f"{f}: dimension {M.shape[0]} differs from {d}")
        C, issues = validate_connectome(M, str(f), warn=False)
        for issue in issues:
            problems.setdefault(issue, []).append(f.name)
        subjects.append(Subject(sid, C, fiq, viq))
    for issue, names in problems.items():
        more = f" and {len(names) - 1} more" if len(names) > 1 else ""
        warnings.warn(f"{root}: {issue} in {names[0]}{more}", stacklevel=2)
    roi_names = None
    if (root / "roi_names.csv").exists():
        roi_names = _read_roi_names(root / "roi_names.csv")
    truth = None
    if (root / "truth.json").exists():
        truth = json.loads((root / "truth.json").read_text())
    log.info("loaded %d subjects (d=%d) from %s", len(subjects), d, root)
    return Dataset(subjects, roi_names, truth)


def write_dataset(dataset, path):
    """Write ``dataset`` in the directory format read by :func:`load_dataset`."""
    root = Path(path)
    (root / "matrices").mkdir(parents=True, exist_ok=True)
    with open(root / "subjects.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "fiq", "viq"])
        for s in dataset.subjects:
            w.writerow([s.id, FLOAT_FMT % s.fiq, FLOAT_FMT % s.viq])
    for s in dataset.subjects:
        np.savetxt(root / "matrices" / f"{s.id}.csv", s.connectome, fmt=FLOAT_FMT, delimiter=",")
    if dataset.roi_names:
        with open(root / "roi_names.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "name"])
            w.writerows(enumerate(dataset.roi_names))
    if dataset.truth is not None:
        (root / "truth.json").write_text(json.dumps(dataset.truth, indent=2, sort_keys=True) + "\n")


def _random_symmetric(rng, d):
    G = rng.standard_normal((d, d))
    S = G + G.T
    return S / np.linalg.norm(S, "fro")


def to_correlation(M):
    """Rescale an SPD matrix to unit diagonal: ``D^-1/2 M D^-1/2``."""
    s = 1.0 / np.sqrt(np.diag(M))
    C = symmetrize(M * np.outer(s, s))
    np.fill_diagonal(C, 1.0)
    return C


def generate_synthetic(spec=SynthSpec()):
    """Draw a cohort whose connectome geometry tracks the target score.

    Every subject's log-matrix is ``B_c + t_i * U + noise * E_i`` where
    ``t_i = (fiq_i - center_c) / score_scale``, ``U`` is a unit-norm direction
    shared by the cohort and ``E_i`` a unit-norm random symmetric matrix. The
    cluster bases sit on the same line, ``B_c = B + (center_c - ref) /
    score_scale * U`` with ``ref`` the mean center, so at zero noise the
    Log-Euclidean distance between any two subjects equals
    ``|fiq_i - fiq_j| / score_scale``.

    ``U`` raises the coupling inside a random subnetwork of ROIs (recorded as
    ``planted_rois`` in the truth sidecar). With ``normalize`` the SPD matrix
    is rescaled to a correlation matrix, which bends the straight line
    slightly; set ``normalize=False`` to keep the geometry exact.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.d
    # shared positive coupling keeps most correlations above zero
    base = 2.0 * np.ones((d, d)) / d + 0.5 * _random_symmetric(rng, d)
    size = max(2, d // 4)
    planted = np.sort(rng.choice(d, size=size, replace=False))
    u = np.zeros(d)
    u[planted] = 1.0
    U = np.outer(u, u) - np.diag(u)
    U /= np.linalg.norm(U, "fro")

    centers = np.asarray(spec.centers, dtype=float)
    ref = float(centers.mean())
    labels = np.sort(np.arange(spec.n) % spec.clusters)
    fiq = centers[labels] + spec.within_std * rng.standard_normal(spec.n)
    outlier = np.zeros(spec.n, dtype=bool)
    if spec.outliers:
        idx = rng.choice(spec.n, size=spec.outliers, replace=False)
        outlier[idx] = True
        signs = rng.choice([-1.0, 1.0], size=spec.outliers)
        fiq[idx] = centers[labels[idx]] + signs * spec.outlier_offset
    viq = fiq + spec.viq_noise * rng.standard_normal(spec.n)

    subjects = []
    width = max(4, len(str(spec.n)))
    for i in range(spec.n):
        c = labels[i]
        B_c = base + (centers[c] - ref) / spec.score_scale * U
        L = B_c + (fiq[i] - centers[c]) / spec.score_scale * U
        if spec.noise > 0:
            L = L + spec.noise * _random_symmetric(rng, d)
        M = expm(L)
        if spec.normalize:
            M = to_correlation(M)
        subjects.append(Subject(f"sub-{i:0{width}d}", M, float(fiq[i]), float(viq[i])))

    truth = {
        "cluster": labels.tolist(),
        "outlier": outlier.tolist(),
        "planted_rois": planted.tolist(),
        "score_scale": spec.score_scale,
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(spec).items()},
    }
    return Dataset(subjects, None, truth)
