"""Logistic regression on normalized hashed counts, with Platt calibration.

This is the discriminative alternative to the generative log-ratio scorer:
the calibrated probability ``rho`` of "looks like target" becomes the log
weight ``ln(rho / (1 - rho))`` for Gumbel top-k selection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from dsir.errors import EmptyInputError, ModelFormatError, VocabMismatchError
from dsir.features import HashedCounts
from dsir.ngram_model import read_doubles, read_header

DEFAULT_L2_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
MODEL_MAGIC = b"LINMOD1"
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class PlattParams:
    A: float
    B: float


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    l2: float
    platt: PlattParams | None = None
    heldout_accuracy: float | None = None

    @property
    def num_buckets(self) -> int:
        return int(self.weights.shape[0])


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def normalize(z: HashedCounts) -> np.ndarray:
    """Count proportions aligned with ``z.indices``."""
    total = z.total
    if total < 1:
        raise EmptyInputError("unscorable empty example")
    return z.counts / total


def design_matrix(rows: Sequence[HashedCounts], num_buckets: int) -> sp.csr_matrix:
    """Stack normalized count vectors into a CSR matrix."""
    indptr = [0]
    indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for z in rows:
        if z.num_buckets != num_buckets:
            raise VocabMismatchError(f"features use {z.num_buckets} buckets, expected {num_buckets}")
        indices.append(z.indices)
        data.append(normalize(z))
        indptr.append(indptr[-1] + len(z))
    if not rows:
        return sp.csr_matrix((0, num_buckets))
    return sp.csr_matrix((np.concatenate(data), np.concatenate(indices), np.asarray(indptr)),
                         shape=(len(rows), num_buckets))


def loss_and_grad(params: np.ndarray, X, y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Mean logistic loss plus ``l2/2 * ||w||^2`` (bias unpenalized) and its gradient.

    ``params`` is ``[w_0, ..., w_{V-1}, b]``.
    """
    w, b = params[:-1], params[-1]
    m = X @ w + b
    # log(1 + exp(-y*m)) with y in {-1, +1}
    ym = np.where(y > 0, m, -m)
    loss = np.logaddexp(0.0, -ym).mean() + 0.5 * l2 * float(w @ w)
    r = -np.where(y > 0, 1.0, -1.0) * sigmoid(-ym) / y.shape[0]
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r + l2 * w
    grad[-1] = r.sum()
    return float(loss), grad


def fit_logistic(X, y: np.ndarray, l2: float, max_iter: int = 10_000, gtol: float = 1e-6) -> np.ndarray:
    """Minimize :func:`loss_and_grad` with L-BFGS; stops at gradient inf-norm < ``gtol``."""
    x0 = np.zeros(X.shape[1] + 1)
    res = scipy.optimize.minimize(loss_and_grad, x0, args=(X, y, l2), jac=True, method="L-BFGS-B",
                                  options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0,
                                           "maxfun": 4 * max_iter})
    return res.x


def balance(pos: Sequence, neg: Sequence, rng: np.random.Generator) -> tuple[list, list]:
    """Downsample the larger class to the size of the smaller one."""
    n = min(len(pos), len(neg))
    def take(xs):
        if len(xs) == n:
            return list(xs)
        keep = np.sort(rng.choice(len(xs), size=n, replace=False))
        return [xs[i] for i in keep]
    return take(pos), take(neg)


def train(pos: Sequence[HashedCounts], neg: Sequence[HashedCounts],
          l2_grid: Sequence[float] = DEFAULT_L2_GRID, seed: int = 0,
          calibrate_on_heldout: bool = True) -> LinearModel:
    """Fit target-vs-raw logistic regression, choosing l2 by held-out accuracy.

    Classes are balanced by downsampling, then shuffled and split in half;
    the first half trains, the second picks l2 (ties go to the smaller l2).
    With ``calibrate_on_heldout`` Platt parameters are fit on the held-out
    scores of the chosen model.
    """
    if not pos or not neg:
        raise EmptyInputError("both classes need at least one example")
    v = pos[0].num_buckets
    rng = np.random.default_rng(seed)
    pos, neg = balance(pos, neg, rng)
    rows = list(pos) + list(neg)
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    perm = rng.permutation(len(rows))
    X = design_matrix([rows[i] for i in perm], v)
    y = y[perm]
    half = max(1, len(rows) // 2)
    Xtr, ytr, Xho, yho = X[:half], y[:half], X[half:], y[half:]
    if Xho.shape[0] == 0:
        Xho, yho = Xtr, ytr

    best = None
    for l2 in sorted(l2_grid):
        params = fit_logistic(Xtr, ytr, l2)
        scores = Xho @ params[:-1] + params[-1]
        acc = float(np.mean(np.where(scores > 0, 1.0, -1.0) == yho))
        if best is None or acc > best[0]:
            best = (acc, l2, params, scores)
    acc, l2, params, scores = best
    model = LinearModel(weights=params[:-1].copy(), bias=float(params[-1]), l2=l2,
                        heldout_accuracy=acc)
    if calibrate_on_heldout and len(set(yho.tolist())) == 2:
        model = replace(model, platt=platt_fit(scores, yho > 0))
    return model


def decision_function(model: LinearModel, z: HashedCounts) -> float:
    if z.num_buckets != model.num_buckets:
        raise VocabMismatchError(f"features use {z.num_buckets} buckets, model has {model.num_buckets}")
    return math.fsum((normalize(z) * model.weights[z.indices]).tolist()) + model.bias


def predict_prob(model: LinearModel, z: HashedCounts) -> float:
    return float(sigmoid(decision_function(model, z)))


def platt_fit(scores, labels, max_iter: int = 100, tol: float = 1e-9) -> PlattParams:
    """Fit ``P(y=1 | s) = 1 / (1 + exp(A*s + B))`` by Newton's method.

    Uses Platt's smoothed targets and a backtracking step on the
    cross-entropy, following the numerically careful formulation.
    """
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels, dtype=bool)
    n_pos = int(lab.sum())
    n_neg = int(lab.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("Platt calibration needs both labels present")
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(lab, hi, lo)

    def objective(a, b):
        f = a * s + b
        # sum t*f + log(1 + exp(-f)) written stably
        return float(np.sum(t * f + np.logaddexp(0.0, -f)))

    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = objective(a, b)
    sigma = 1e-12
    for _ in range(max_iter):
        f = a * s + b
        p = sigmoid(-f)  # model probability of the positive class
        q = 1.0 - p
        d2 = p * q
        h11 = float(np.sum(s * s * d2)) + sigma
        h22 = float(np.sum(d2)) + sigma
        h21 = float(np.sum(s * d2))
        d1 = t - p
        g1 = float(np.sum(s * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < tol and abs(g2) < tol:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            na, nb = a + step * da, b + step * db
            nf = objective(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            break
    return PlattParams(A=a, B=b)


def calibrate(params: PlattParams, score):
    """Calibrated probability; strictly increasing in ``score`` when ``A < 0``."""
    out = sigmoid(-(params.A * np.asarray(score, dtype=np.float64) + params.B))
    return float(out) if np.ndim(out) == 0 else out


def clf_log_weight(rho: float) -> float:
    rho = min(max(float(rho), PROB_CLAMP), 1.0 - PROB_CLAMP)
    return math.log(rho / (1.0 - rho))


def save_model(path: str | Path, model: LinearModel) -> None:
    header = {"V": model.num_buckets, "l2": model.l2}
    if model.platt is not None:
        header["platt"] = {"A": model.platt.A, "B": model.platt.B}
    if model.heldout_accuracy is not None:
        header["heldout_accuracy"] = model.heldout_accuracy
    payload = np.concatenate([model.weights, [model.bias]]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload.tobytes())


def load_model(path: str | Path) -> LinearModel:
    with open(path, "rb") as fh:
        header = read_header(fh, MODEL_MAGIC)
        try:
            v = int(header["V"])
        except (KeyError, TypeError, ValueError):
            raise ModelFormatError("header lacks V") from None
        payload = read_doubles(fh, v + 1)
    platt = header.get("platt")
    return LinearModel(
        weights=payload[:-1].copy(), bias=float(payload[-1]), l2=float(header["l2"]),
        platt=PlattParams(platt["A"], platt["B"]) if platt else None,
        heldout_accuracy=header.get("heldout_accuracy"),
    )
