"""Training data container and serialization.

A training set holds N jointly observed paths of covariates and uncertain
quantities over a horizon of T stages. Covariates are observed at stages
0..T-1 and predict the uncertainty of the following stage; uncertainties
attach to stages 1..T. No covariate is stored for the final stage because
nothing is predicted from it.

Files: a long CSV with columns ``sample,stage,kind,dim0,dim1,...`` where
``kind`` is ``x`` (covariate) or ``y`` (uncertainty), and a JSON mirror with
nested lists. Both carry a metadata block (written as ``#`` comment lines in
CSV, a ``metadata`` key in JSON) and round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = ["TrainingSet", "read_training_csv", "read_training_json"]


@dataclass
class TrainingSet:
    """N sample paths of covariates (stages 0..T-1) and uncertainties (1..T).

    Attributes
    ----------
    covariates : ndarray, shape (N, T, d_x)
        ``covariates[i, t]`` is the covariate of sample i at stage t.
    uncertainties : ndarray, shape (N, T, d_y)
        ``uncertainties[i, t - 1]`` is the uncertain vector of sample i at
        stage t, for t in 1..T. Use :meth:`y` to avoid the index shift.
    metadata : dict
        Free-form provenance carried through serialization.
    """

    covariates: np.ndarray
    uncertainties: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.covariates = np.asarray(self.covariates, dtype=float)
        self.uncertainties = np.asarray(self.uncertainties, dtype=float)
        if self.covariates.ndim != 3 or self.uncertainties.ndim != 3:
            raise InputError("covariates and uncertainties must be 3-d arrays "
                             "(sample, stage, dim)")
        n, t, _ = self.covariates.shape
        ny, ty, _ = self.uncertainties.shape
        if n != ny:
            raise InputError(f"sample count mismatch: {n} covariate paths vs "
                             f"{ny} uncertainty paths")
        if t != ty:
            raise InputError(f"horizon mismatch: covariates span {t} stages, "
                             f"uncertainties span {ty}")
        if not (np.isfinite(self.covariates).all()
                and np.isfinite(self.uncertainties).all()):
            raise InputError("training data contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.covariates.shape[0]

    @property
    def horizon(self) -> int:
        """Number of uncertain stages T; the problem has stages 0..T."""
        return self.covariates.shape[1]

    @property
    def d_x(self) -> int:
        return self.covariates.shape[2]

    @property
    def d_y(self) -> int:
        return self.uncertainties.shape[2]

    def x(self, t: int) -> np.ndarray:
        """Covariates observed at stage t, for t in 0..T-1. Shape (N, d_x)."""
        if not 0 <= t < self.horizon:
            raise InputError(f"covariate stage {t} outside 0..{self.horizon - 1}")
        return self.covariates[:, t, :]

    def y(self, t: int) -> np.ndarray:
        """Uncertainties of stage t, for t in 1..T. Shape (N, d_y)."""
        if not 1 <= t <= self.horizon:
            raise InputError(f"uncertainty stage {t} outside 1..{self.horizon}")
        return self.uncertainties[:, t - 1, :]

    # -- serialization ----------------------------------------------------

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(_metadata_comments(self.metadata))
            width = max(self.d_x, self.d_y)
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sample", "stage", "kind"]
                            + [f"dim{j}" for j in range(width)])
            for i in range(self.n_samples):
                for t in range(self.horizon):
                    row = [i, t, "x"] + [repr(float(v)) for v in self.covariates[i, t]]
                    writer.writerow(row + [""] * (width - self.d_x))
                for t in range(1, self.horizon + 1):
                    row = [i, t, "y"] + [repr(float(v)) for v in self.uncertainties[i, t - 1]]
                    writer.writerow(row + [""] * (width - self.d_y))

    def to_json(self, path: str) -> None:
        doc = {
            "metadata": self.metadata,
            "n_samples": self.n_samples,
            "horizon": self.horizon,
            "d_x": self.d_x,
            "d_y": self.d_y,
            "covariates": self.covariates.tolist(),
            "uncertainties": self.uncertainties.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def _metadata_comments(metadata: dict) -> str:
    lines = [f"# {key}: {value}" for key, value in metadata.items()]
    return "".join(line + "\n" for line in lines)


def read_training_csv(path: str) -> TrainingSet:
    """Parse a training CSV; ``#`` lines become metadata, extra x stages warn."""
    metadata = {}
    body = io.StringIO()
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                text = line[1:].strip()
                if ":" in text:
                    key, _, value = text.partition(":")
                    metadata[key.strip()] = value.strip()
                continue
            body.write(line)
    body.seek(0)
    reader = csv.reader(body)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError(f"{path}: empty training CSV") from None
    if header[:3] != ["sample", "stage", "kind"]:
        raise InputError(f"{path}: expected header sample,stage,kind,dim0,..., "
                         f"got {header[:3]}")
    x_rows: dict[tuple[int, int], list[float]] = {}
    y_rows: dict[tuple[int, int], list[float]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            i, t, kind = int(row[0]), int(row[1]), row[2]
            values = [float(v) for v in row[3:] if v != ""]
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        if kind == "x":
            x_rows[(i, t)] = values
        elif kind == "y":
            y_rows[(i, t)] = values
        else:
            raise InputError(f"{path}:{lineno}: kind must be 'x' or 'y', got {kind!r}")
    if not y_rows:
        raise InputError(f"{path}: no uncertainty rows")
    horizon = max(t for _, t in y_rows)
    dropped = [(i, t) for (i, t) in x_rows if t >= horizon]
    if dropped:
        warnings.warn(f"{path}: ignoring {len(dropped)} covariate row(s) at stage "
                      f">= {horizon}; no decision is conditioned on them")
        for key in dropped:
            del x_rows[key]
    samples = sorted({i for i, _ in y_rows})
    n = len(samples)
    if samples != list(range(n)):
        raise InputError(f"{path}: sample indices must be 0..{n - 1} without gaps")
    d_x = len(next(iter(x_rows.values()))) if x_rows else 0
    d_y = len(next(iter(y_rows.values())))
    covariates = np.zeros((n, horizon, d_x))
    uncertainties = np.zeros((n, horizon, d_y))
    for i in range(n):
        for t in range(horizon):
            key = (i, t)
            if key not in x_rows:
                raise InputError(f"{path}: missing covariate row sample={i} stage={t}")
            if len(x_rows[key]) != d_x:
                raise InputError(f"{path}: ragged covariate width at sample={i} stage={t}")
            covariates[i, t] = x_rows[key]
        for t in range(1, horizon + 1):
            key = (i, t)
            if key not in y_rows:
                raise InputError(f"{path}: missing uncertainty row sample={i} stage={t}")
            if len(y_rows[key]) != d_y:
                raise InputError(f"{path}: ragged uncertainty width at sample={i} stage={t}")
            uncertainties[i, t - 1] = y_rows[key]
    return TrainingSet(covariates, uncertainties, metadata)


def read_training_json(path: str) -> TrainingSet:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        ts = TrainingSet(np.asarray(doc["covariates"], dtype=float),
                         np.asarray(doc["uncertainties"], dtype=float),
                         doc.get("metadata", {}))
    except KeyError as exc:
        raise InputError(f"{path}: missing key {exc}") from None
    for key in ("n_samples", "horizon"):
        if key in doc and doc[key] != getattr(ts, key):
            raise InputError(f"{path}: declared {key}={doc[key]} does not match data "
                             f"({getattr(ts, key)})")
    return ts
