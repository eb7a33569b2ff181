"""
Bayesian optimisation over the design lattice.

Each decision becomes a real variable on a hyper-rectangle cut into unit
sub-intervals, one per outcome (re-upload in [-1/2, 3/2], rotation in
[-1/2, 5/2], gate in [-1/2, 15/2]).  A Matern-5/2 Gaussian process is fit
to validation losses and the next design maximises log expected
improvement over uniformly drawn candidates.
"""

import csv
import io
import logging
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
from scipy import linalg, optimize, special

from .data import Dataset, Split
from .design import FIXED_GATES, ROTATIONS, Design, QubitDecision, allowed_gates
from .errors import ConfigurationError, FittingError
from .search_random import TrialRecord, trial_seed
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

LOG_FLOOR = np.log(1e-300)


# ---------------------------------------------------------------------------
# hyper-rectangle and lattice mapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HyperRectangle:
    n_qubits: int
    n_layers: int
    mode: str = "WHOLE"

    @property
    def n_cells(self) -> int:
        return self.n_qubits if self.mode == "LAYER" else self.n_qubits * self.n_layers

    @property
    def choices(self) -> np.ndarray:
        per_cell = [2, len(ROTATIONS), len(allowed_gates(self.n_qubits))]
        return np.tile(per_cell, self.n_cells)

    @property
    def lower(self) -> np.ndarray:
        return np.full(3 * self.n_cells, -0.5)

    @property
    def upper(self) -> np.ndarray:
        return self.choices - 0.5

    @property
    def dim(self) -> int:
        return 3 * self.n_cells

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def normalize(self, X) -> np.ndarray:
        return (np.asarray(X, float) - self.lower) / (self.upper - self.lower)


def round_to_lattice(rect: HyperRectangle, x) -> np.ndarray:
    """Nearest integer per coordinate, halves rounding up, clamped into range."""
    x = np.asarray(x, dtype=float)
    if np.any(x < rect.lower) or np.any(x > rect.upper):
        log.warning("point outside the feasible box; clamping")
    idx = np.floor(x + 0.5).astype(np.int64)
    return np.clip(idx, 0, rect.choices - 1)


def decode(rect: HyperRectangle, x) -> Design:
    idx = round_to_lattice(rect, x)
    gates = allowed_gates(rect.n_qubits)
    cells = [QubitDecision(bool(idx[3 * c]), ROTATIONS[idx[3 * c + 1]], gates[idx[3 * c + 2]])
             for c in range(rect.n_cells)]
    if rect.mode == "LAYER":
        grid = [tuple(cells)] * rect.n_layers
    else:
        grid = [tuple(cells[l * rect.n_qubits:(l + 1) * rect.n_qubits]) for l in range(rect.n_layers)]
    return Design(rect.n_qubits, rect.n_layers, tuple(grid))


def encode(rect: HyperRectangle, design: Design) -> np.ndarray:
    gates = allowed_gates(rect.n_qubits)
    rows = design.cells[:1] if rect.mode == "LAYER" else design.cells
    out = []
    for row in rows:
        for c in row:
            out += [int(c.reupload), ROTATIONS.index(c.rotation), gates.index(c.gate)]
    return np.array(out, dtype=float)


# ---------------------------------------------------------------------------
# Gaussian process
# ---------------------------------------------------------------------------


def matern52(A, B, lengthscales, amplitude):
    A = np.atleast_2d(A) / lengthscales
    B = np.atleast_2d(B) / lengthscales
    d2 = np.maximum(np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :] - 2 * A @ B.T, 0.0)
    r = np.sqrt(5.0 * d2)
    return amplitude**2 * (1.0 + r + r**2 / 3.0) * np.exp(-r)


@dataclass
class GPModel:
    X: np.ndarray
    y: np.ndarray
    y_mean: float
    y_std: float
    lengthscales: np.ndarray
    amplitude: float
    noise: float
    jitter: float
    chol: np.ndarray
    alpha: np.ndarray


def _cholesky(K):
    for jitter in (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4):
        try:
            return linalg.cholesky(K + jitter * np.eye(len(K)), lower=True), jitter
        except linalg.LinAlgError:
            continue
    raise FittingError("kernel matrix is singular even with 1e-4 jitter")


def lengthscale_prior(d: int):
    """Normal prior on log-lengthscale whose centre grows like log(sqrt(d))."""
    return np.sqrt(2.0) + 0.5 * np.log(d), np.sqrt(3.0)


NOISE_PRIOR = (-4.0, 1.0)


def _neg_log_posterior(params, X, ys, ard):
    """Negative log marginal likelihood plus the log-normal hyperpriors."""
    d = X.shape[1]
    params = np.clip(params, -12.0, 6.0)
    log_ls = params[:d] if ard else params[:1]
    ls = np.exp(np.broadcast_to(log_ls, (d,)))
    noise = np.exp(params[-1])
    K = matern52(X, X, ls, 1.0) + noise * np.eye(len(X))
    try:
        L, _ = _cholesky(K)
    except FittingError:
        return 1e10
    a = linalg.cho_solve((L, True), ys)
    nll = 0.5 * ys @ a + np.sum(np.log(np.diag(L))) + 0.5 * len(X) * np.log(2 * np.pi)
    mu, sigma = lengthscale_prior(d)
    nll += np.sum((log_ls - mu) ** 2) / (2 * sigma**2)
    nll += (params[-1] - NOISE_PRIOR[0]) ** 2 / (2 * NOISE_PRIOR[1] ** 2)
    return nll


def gp_fit(X, y, ard: bool = False, rng: Optional[np.random.Generator] = None,
           n_starts: int = 5, lengthscales=None, amplitude: float = 1.0, noise=None) -> GPModel:
    """Exact GP regression on standardised targets.

    Lengthscale(s) and noise not given explicitly are MAP estimates under
    log-normal priors, found by multi-start Nelder-Mead.  The signal
    amplitude defaults to 1, matching the unit variance of the targets.
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float)
    if len(X) != len(y) or len(y) < 2:
        raise FittingError("GP fitting needs at least two paired observations")
    y_mean = float(y.mean())
    y_std = float(y.std()) or 1.0
    ys = (y - y_mean) / y_std
    d = X.shape[1]
    if lengthscales is None or noise is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        n_ls = d if ard else 1
        mu, sigma = lengthscale_prior(d)
        best = None
        for s in range(n_starts):
            x0 = np.concatenate([
                rng.normal(mu, sigma, n_ls) if s else np.full(n_ls, mu),
                [rng.normal(*NOISE_PRIOR) if s else NOISE_PRIOR[0]],
            ])
            res = optimize.minimize(_neg_log_posterior, x0, args=(X, ys, ard), method="Nelder-Mead",
                                    options={"maxiter": 400 * len(x0), "xatol": 1e-4, "fatol": 1e-6})
            if best is None or res.fun < best.fun:
                best = res
        p = np.clip(best.x, -12.0, 6.0)
        fitted_ls = np.exp(p[:d] if ard else np.full(d, p[0]))
        lengthscales = fitted_ls if lengthscales is None else lengthscales
        noise = float(np.exp(p[-1])) if noise is None else noise
    ls = np.broadcast_to(np.asarray(lengthscales, float), (d,)).copy()
    K = matern52(X, X, ls, amplitude) + noise * np.eye(len(X))
    L, jitter = _cholesky(K)
    alpha = linalg.cho_solve((L, True), ys)
    return GPModel(X, y, y_mean, y_std, ls, float(amplitude), float(noise), jitter, L, alpha)


def gp_posterior(model: GPModel, Xs):
    """Posterior mean and standard deviation of the latent function, original units."""
    Xs = np.atleast_2d(np.asarray(Xs, float))
    Ks = matern52(model.X, Xs, model.lengthscales, model.amplitude)
    mean = Ks.T @ model.alpha
    v = linalg.solve_triangular(model.chol, Ks, lower=True)
    var = np.maximum(model.amplitude**2 - np.sum(v**2, axis=0), 0.0)
    return model.y_mean + model.y_std * mean, model.y_std * np.sqrt(var)


# ---------------------------------------------------------------------------
# acquisition
# ---------------------------------------------------------------------------


_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


def _log_h(z):
    """log(z * Phi(z) + phi(z)) without cancellation for very negative z."""
    z = np.asarray(z, float)
    out = np.empty_like(z)
    mid = z > -5.0
    zm = z[mid]
    out[mid] = np.log(zm * special.ndtr(zm) + np.exp(-0.5 * zm**2 - _LOG_SQRT_2PI))
    low = ~mid & (z > -1e3)
    zl = z[low]
    out[low] = -0.5 * zl**2 + np.log(
        np.exp(-_LOG_SQRT_2PI) + 0.5 * zl * special.erfcx(-zl / np.sqrt(2.0)))
    far = ~mid & ~low
    zf = z[far]
    out[far] = -0.5 * zf**2 - _LOG_SQRT_2PI - 2.0 * np.log(-zf)
    return out


def log_ei(mean, std, best_so_far):
    """log E[max(best - f, 0)] for f ~ N(mean, std^2) (minimisation)."""
    mean, std = np.broadcast_arrays(np.asarray(mean, float), np.asarray(std, float))
    scalar = mean.ndim == 0
    mean, std = np.atleast_1d(mean), np.atleast_1d(std)
    out = np.empty(mean.shape)
    pos = std > 0
    z = (best_so_far - mean[pos]) / std[pos]
    out[pos] = np.log(std[pos]) + _log_h(z)
    imp = best_so_far - mean[~pos]
    out[~pos] = np.log(np.maximum(imp, 1e-300))
    out = np.maximum(out, LOG_FLOOR)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# search loop
# ---------------------------------------------------------------------------


@dataclass
class BOStep:
    iteration: int
    design: Design
    val_loss: float
    incumbent_loss: float
    from_model: bool


@dataclass
class BOResult:
    best: TrialRecord
    trace: List[BOStep]

    def trace_csv(self, design_paths=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "design", "val_loss", "incumbent_loss"])
        for k, s in enumerate(self.trace):
            path = design_paths[k] if design_paths else s.design.tokens()
            w.writerow([s.iteration, path, repr(float(s.val_loss)), repr(float(s.incumbent_loss))])
        return buf.getvalue()


def run_bo(dataset: Dataset, split: Split, n_layers: int, budget: int = 30, inner_epochs: int = 100,
           n_init: int = 10, candidates_per_step: int = 2048, seed: int = 0, mode: str = "WHOLE",
           train_config: Optional[TrainConfig] = None, ard: bool = False) -> BOResult:
    if budget < n_init or n_init < 1:
        raise ConfigurationError("need 1 <= n_init <= budget")
    if len(split.val) == 0:
        raise ConfigurationError("design search needs a validation split")
    rect = HyperRectangle(dataset.n_features, n_layers, mode.upper())
    rng = np.random.default_rng(seed)
    config = replace(train_config or TrainConfig(), epochs=inner_epochs, seed=trial_seed(seed, 0))
    X: List[np.ndarray] = []
    y: List[float] = []
    seen = set()
    trace: List[BOStep] = []
    best: Optional[TrialRecord] = None

    def evaluate(design, from_model):
        nonlocal best
        result = train(design, dataset, split, config)
        f = result.history.final
        rec = TrialRecord(design, inner_epochs, f.val_loss, f.val_acc, seed=config.seed,
                          test_loss=f.test_loss, test_acc=f.test_acc, theta=result.theta)
        X.append(encode(rect, design))
        y.append(f.val_loss)
        seen.add(design.tokens())
        if best is None or rec.val_loss < best.val_loss:
            best = rec
        trace.append(BOStep(len(trace) + 1, design, f.val_loss, best.val_loss, from_model))
        log.info("eval %d: val_loss %.4f incumbent %.4f", len(trace), f.val_loss, best.val_loss)

    for _ in range(n_init):
        evaluate(decode(rect, rect.sample(rng, 1)[0]), False)
    while len(trace) < budget:
        Xn = rect.normalize(np.array(X))
        model = gp_fit(Xn, np.array(y), ard=ard, rng=rng)
        cands = round_to_lattice(rect, rect.sample(rng, candidates_per_step)).astype(float)
        mean, std = gp_posterior(model, rect.normalize(cands))
        scores = log_ei(mean, std, min(y))
        chosen = None
        for k in np.argsort(-scores, kind="stable"):
            d = decode(rect, cands[k])
            if d.tokens() not in seen:
                chosen = d
                break
        if chosen is None:
            chosen = decode(rect, rect.sample(rng, 1)[0])
        evaluate(chosen, True)
    return BOResult(best, trace)


def random_baseline(dataset: Dataset, split: Split, n_layers: int, budget: int = 30,
                    inner_epochs: int = 100, seed: int = 0, mode: str = "WHOLE",
                    train_config: Optional[TrainConfig] = None) -> BOResult:
    """Pure random search drawing from the same stream as BO's initial design."""
    return run_bo(dataset, split, n_layers, budget=budget, inner_epochs=inner_epochs, n_init=budget,
                  seed=seed, mode=mode, train_config=train_config)
