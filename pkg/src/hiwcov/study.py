"""Frequentist-risk simulation over the seven p=5 test matrices.

Every replication draws one dataset, runs the three chains on it, and scores
the six Bayes estimates plus the MLE under all four losses. Replication
``r`` of matrix ``m`` at sample size ``n`` is seeded from
``SeedSequence([master_seed, matrix_index(m), n, r])`` so any subset of a study
can be re-run on its own and still match the full run.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from os import PathLike
from typing import Sequence

import numpy as np

from .estimators import (
    EstimatorKind,
    LossKind,
    bayes_estimate_L1,
    bayes_estimate_L2,
    loss_eigen_rel,
    loss_frobenius,
    loss_stein,
    mle_estimate,
)
from .gibbs import SamplerConfig, run_chain
from .matrix_core import SpdMatrix, givens_rotation_product, symmetric_eigen
from .models import ModelSpec, Variant
from .rand_dist import RngStream, sample_mvn_zero, scatter_matrix

__all__ = [
    "MATRIX_IDS",
    "StudyConfig",
    "RiskRow",
    "RiskReport",
    "ReplicationError",
    "build_true_matrix",
    "true_eigenvalues",
    "run_replication",
    "run_study",
    "RISK_HEADER",
]

log = logging.getLogger(__name__)

P = 5
MATRIX_IDS = ("A", "B", "C", "B1", "B2", "C1", "C2")
RISK_HEADER = ("matrix", "n", "estimator", "loss", "mean", "stderr", "excluded")
RAW_HEADER = ("matrix", "n", "replication", "estimator", "loss", "value")

_SPECTRA = {
    "A": np.ones(P),
    "B": 0.75 ** np.arange(5.0),
    "C": 0.75 ** np.array([0.0, 1.0, 2.0, 10.0, 20.0]),
}
# B2/C2 angles: 10 values from -pi/4 to +pi/4, endpoints included
_ANGLES = {
    "1": np.full(P * (P - 1) // 2, math.pi / 4),
    "2": np.linspace(-math.pi / 4, math.pi / 4, P * (P - 1) // 2),
}

_MODEL_ESTIMATORS = (
    (Variant.MODEL1, EstimatorKind.MODEL1_L1, EstimatorKind.MODEL1_L2),
    (Variant.MODEL2, EstimatorKind.MODEL2_L1, EstimatorKind.MODEL2_L2),
    (Variant.MODEL_DK, EstimatorKind.DK_L1, EstimatorKind.DK_L2),
)


class ReplicationError(RuntimeError):
    pass


def build_true_matrix(matrix_id: str) -> SpdMatrix:
    """One of ``A, B, C`` (diagonal) or their Givens-rotated versions ``Q^T D Q``."""
    if matrix_id not in MATRIX_IDS:
        raise ValueError(f"unknown matrix id {matrix_id!r}; expected one of {MATRIX_IDS}")
    d = np.diag(_SPECTRA[matrix_id[0]])
    if len(matrix_id) == 1:
        return SpdMatrix(d)
    q = givens_rotation_product(P, _ANGLES[matrix_id[1]])
    return SpdMatrix(q.T @ d @ q)


def true_eigenvalues(matrix_id: str) -> np.ndarray:
    """Known spectrum of a test matrix, descending; rotation leaves it unchanged."""
    return np.sort(_SPECTRA[matrix_id[0]])[::-1].copy()


@dataclass(frozen=True)
class StudyConfig:
    n_values: tuple[int, ...] = (5, 100)
    replications: int = 100
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    delta: int = 2
    dk_bound: float = 1e6
    master_seed: int = 20100101
    matrices: tuple[str, ...] = MATRIX_IDS

    def __post_init__(self):
        if self.replications < 2:
            raise ValueError("replications must be >= 2 for a standard error")
        bad = [m for m in self.matrices if m not in MATRIX_IDS]
        if bad:
            raise ValueError(f"unknown matrices {bad}")
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "matrices", tuple(self.matrices))

    def model_spec(self, variant: Variant) -> ModelSpec:
        return ModelSpec(variant, delta=self.delta, b=self.dk_bound)


def replication_stream(master_seed: int, matrix_id: str, n: int, rep: int) -> RngStream:
    return RngStream.for_keys(master_seed, MATRIX_IDS.index(matrix_id), n, rep)


def _score(est, truth, truth_eigs) -> dict[LossKind, float]:
    eig = symmetric_eigen(est).values
    return {
        LossKind.STEIN: loss_stein(est, truth),
        LossKind.FROBENIUS: loss_frobenius(est, truth),
        LossKind.EIGEN_MIN_REL: loss_eigen_rel(truth_eigs[-1], eig[-1]),
        LossKind.EIGEN_MAX_REL: loss_eigen_rel(truth_eigs[0], eig[0]),
    }


def run_replication(matrix_id: str, n: int, config: StudyConfig, rng: RngStream
                    ) -> dict[tuple[EstimatorKind, LossKind], float]:
    """One dataset, three chains, seven estimators, four losses each."""
    truth = build_true_matrix(matrix_id)
    truth_eigs = true_eigenvalues(matrix_id)
    x = sample_mvn_zero(rng.substream(0), truth, n)
    s = scatter_matrix(x)
    out: dict[tuple[EstimatorKind, LossKind], float] = {}
    for k, (variant, kind_l1, kind_l2) in enumerate(_MODEL_ESTIMATORS, start=1):
        trace = run_chain(config.model_spec(variant), s, n, config.sampler, rng.substream(k))
        for kind, est in ((kind_l1, bayes_estimate_L1(trace)), (kind_l2, bayes_estimate_L2(trace))):
            for loss, value in _score(est, truth, truth_eigs).items():
                out[kind, loss] = value
    for loss, value in _score(mle_estimate(s, n), truth, truth_eigs).items():
        out[EstimatorKind.MLE, loss] = value
    return out


@dataclass(frozen=True)
class RiskRow:
    matrix: str
    n: int
    estimator: EstimatorKind
    loss: LossKind
    mean: float
    stderr: float
    excluded: int

    def as_csv(self) -> list:
        return [self.matrix, self.n, self.estimator.value, self.loss.value,
                repr(self.mean), repr(self.stderr), self.excluded]


@dataclass
class RiskReport:
    rows: list[RiskRow]
    raw: dict[tuple[str, int], list[dict]] = field(default_factory=dict, repr=False)

    def get(self, matrix: str, n: int, estimator, loss) -> RiskRow:
        estimator, loss = EstimatorKind(estimator), LossKind(loss)
        for row in self.rows:
            if (row.matrix, row.n, row.estimator, row.loss) == (matrix, n, estimator, loss):
                return row
        raise KeyError((matrix, n, estimator, loss))

    def risk(self, matrix: str, n: int, estimator, loss) -> float:
        return self.get(matrix, n, estimator, loss).mean

    def write_csv(self, path: str | PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RISK_HEADER)
            for row in self.rows:
                w.writerow(row.as_csv())

    def write_raw_csv(self, path: str | PathLike) -> None:
        """Per-replication losses, one value per line."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RAW_HEADER)
            for (matrix, n), reps in self.raw.items():
                for r, table in enumerate(reps):
                    for (est, loss), value in table.items():
                        w.writerow([matrix, n, r, est.value, loss.value, repr(value)])


def aggregate(matrix: str, n: int, tables: Sequence[dict]) -> list[RiskRow]:
    """Mean and ``sd / sqrt(count)`` per cell; infinite losses are excluded and counted."""
    rows = []
    for est in EstimatorKind:
        for loss in LossKind:
            values = np.array([t[est, loss] for t in tables], dtype=float)
            finite = values[np.isfinite(values)]
            excluded = int(values.size - finite.size)
            if excluded:
                log.info("%s n=%d %s/%s: %d non-finite losses excluded",
                         matrix, n, est.value, loss.value, excluded)
            mean = float(finite.mean()) if finite.size else math.nan
            se = float(finite.std(ddof=1) / math.sqrt(finite.size)) if finite.size > 1 else 0.0
            rows.append(RiskRow(matrix, n, est, loss, mean, se, excluded))
    return rows


def _replication_task(args):
    matrix_id, n, rep, config = args
    rng = replication_stream(config.master_seed, matrix_id, n, rep)
    try:
        return run_replication(matrix_id, n, config, rng)
    except Exception as exc:
        raise ReplicationError(f"matrix {matrix_id}, n={n}, replication {rep}: {exc}") from exc


def run_study(config: StudyConfig, threads: int | None = 1, progress=None) -> RiskReport:
    """Run every ``(matrix, n, replication)`` cell and fold the losses into risks.

    Aggregation is ordered by replication index, so the report is identical
    for any ``threads``.
    """
    tasks = [(m, n, r, config) for m in config.matrices for n in config.n_values
             for r in range(config.replications)]
    threads = threads or os.cpu_count() or 1
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replication_task, tasks))
    else:
        results = []
        for t in tasks:
            results.append(_replication_task(t))
            if progress is not None:
                progress(len(results), len(tasks))

    rows: list[RiskRow] = []
    raw: dict[tuple[str, int], list[dict]] = {}
    it = iter(results)
    for m in config.matrices:
        for n in config.n_values:
            tables = [next(it) for _ in range(config.replications)]
            raw[m, n] = tables
            rows.extend(aggregate(m, n, tables))
    return RiskReport(rows, raw)

