"""Log-domain hidden Markov models with discrete or diagonal-Gaussian emissions.

Inference (forward, backward, Viterbi) and Baum-Welch re-estimation all work
on log probabilities; ``-inf`` marks structurally forbidden transitions.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

TOPOLOGIES = ("ergodic", "left_to_right")
EMISSION_KINDS = ("gaussian", "discrete")
DEFAULT_VARIANCE_FLOOR = 1e-3
LEFT_TO_RIGHT_MAX_JUMP = 1
_STOCHASTIC_TOL = 1e-9
_MIN_OCCUPANCY = 1e-10
_LOG_2PI = np.log(2 * np.pi)


def logsumexp(a, axis=None):
    """log(sum(exp(a))) without overflow; all ``-inf`` input gives ``-inf``."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(p, dtype=np.float64))


def _check_stochastic(name, log_p):
    sums = np.exp(logsumexp(log_p, axis=-1))
    if not np.allclose(sums, 1.0, rtol=0, atol=_STOCHASTIC_TOL):
        raise ValueError(f"{name} rows must sum to 1 (got {sums})")


class HmmError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteEmission:
    log_B: np.ndarray

    def __post_init__(self):
        log_B = np.array(self.log_B, dtype=np.float64)
        if log_B.ndim != 2:
            raise ValueError("log_B must be an S x V table")
        _check_stochastic("emission table", log_B)
        object.__setattr__(self, "log_B", log_B)

    @property
    def n_states(self) -> int:
        return self.log_B.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.log_B.shape[1]

    def check(self, obs) -> np.ndarray:
        obs = np.asarray(obs)
        if obs.ndim != 1 or obs.size == 0:
            raise HmmError("discrete observations must be a nonempty 1-D symbol sequence")
        if not np.issubdtype(obs.dtype, np.integer):
            if not np.all(np.equal(np.mod(obs, 1), 0)):
                raise HmmError("discrete observations must be integer symbols")
            obs = obs.astype(np.int64)
        if obs.min() < 0 or obs.max() >= self.n_symbols:
            raise HmmError(f"symbol index outside [0, {self.n_symbols})")
        return obs

    def log_likelihoods(self, obs) -> np.ndarray:
        return self.log_B[:, self.check(obs)].T


@dataclass(frozen=True)
class GaussianEmission:
    means: np.ndarray
    variances: np.ndarray
    variance_floor: float = DEFAULT_VARIANCE_FLOOR

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        variances = np.array(self.variances, dtype=np.float64)
        if means.ndim != 2 or means.shape != variances.shape:
            raise ValueError("means and variances must both be S x D")
        if not self.variance_floor > 0:
            raise ValueError("variance floor must be positive")
        if np.any(variances < self.variance_floor):
            raise ValueError(
                f"variances must be >= the floor {self.variance_floor}; "
                f"smallest is {variances.min()}"
            )
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_states(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def check(self, obs) -> np.ndarray:
        obs = np.asarray(getattr(obs, "rows", obs), dtype=np.float64)
        if obs.ndim != 2 or obs.shape[0] == 0:
            raise HmmError("continuous observations must be a nonempty T x D array")
        if obs.shape[1] != self.dim:
            raise HmmError(f"observation dimension {obs.shape[1]} != model dimension {self.dim}")
        return obs

    def log_likelihoods(self, obs) -> np.ndarray:
        x = self.check(obs)
        diff = x[:, None, :] - self.means[None, :, :]
        quad = np.sum(diff ** 2 / self.variances[None], axis=2)
        norm = np.sum(np.log(self.variances), axis=1) + self.dim * _LOG_2PI
        return -0.5 * (norm[None, :] + quad)


Emission = Union[DiscreteEmission, GaussianEmission]


def gaussian_log_pdf(mean, variance, x) -> float:
    """Log density of a diagonal Gaussian."""
    mean, variance, x = (np.asarray(v, dtype=np.float64) for v in (mean, variance, x))
    if not mean.shape == variance.shape == x.shape:
        raise HmmError("mean, variance and x must have the same dimension")
    return float(-0.5 * np.sum(np.log(2 * np.pi * variance) + (x - mean) ** 2 / variance))


@dataclass(frozen=True)
class HmmModel:
    log_pi: np.ndarray
    log_A: np.ndarray
    emission: Emission
    topology: str = "ergodic"

    def __post_init__(self):
        log_pi = np.array(self.log_pi, dtype=np.float64)
        log_A = np.array(self.log_A, dtype=np.float64)
        S = log_pi.shape[0]
        if log_pi.ndim != 1 or log_A.shape != (S, S):
            raise ValueError("log_pi must have length S and log_A shape S x S")
        if self.emission.n_states != S:
            raise ValueError("emission state count does not match the transition matrix")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        _check_stochastic("initial distribution", log_pi)
        _check_stochastic("transition matrix", log_A)
        if self.topology == "left_to_right":
            i, j = np.indices((S, S))
            forbidden = (j < i) | (j > i + LEFT_TO_RIGHT_MAX_JUMP)
            if np.any(np.isfinite(log_A[forbidden])):
                raise ValueError("left-to-right model has a forbidden transition")
        object.__setattr__(self, "log_pi", log_pi)
        object.__setattr__(self, "log_A", log_A)

    @property
    def n_states(self) -> int:
        return self.log_pi.shape[0]

    @property
    def pi(self) -> np.ndarray:
        return np.exp(self.log_pi)

    @property
    def A(self) -> np.ndarray:
        return np.exp(self.log_A)

    @classmethod
    def from_probabilities(cls, pi, A, emission, topology="ergodic") -> "HmmModel":
        """Build from linear-domain pi and A; ``emission`` may be a B table."""
        if not isinstance(emission, (DiscreteEmission, GaussianEmission)):
            emission = DiscreteEmission(_log(emission))
        return cls(_log(pi), _log(A), emission, topology)

    def emission_log_likelihoods(self, obs) -> np.ndarray:
        """T x S matrix of log b_s(o_t)."""
        return self.emission.log_likelihoods(obs)


@dataclass(frozen=True)
class ForwardResult:
    log_likelihood: float
    log_alpha: np.ndarray


@dataclass(frozen=True)
class ViterbiResult:
    log_prob: float
    path: np.ndarray


def _forward(log_b, log_pi, log_A):
    T, S = log_b.shape
    log_alpha = np.empty((T, S))
    log_alpha[0] = log_pi + log_b[0]
    for t in range(1, T):
        log_alpha[t] = logsumexp(log_alpha[t - 1][:, None] + log_A, axis=0) + log_b[t]
    return logsumexp(log_alpha[-1]), log_alpha


def _backward(log_b, log_A):
    T, S = log_b.shape
    log_beta = np.zeros((T, S))
    for t in range(T - 2, -1, -1):
        log_beta[t] = logsumexp(log_A + (log_b[t + 1] + log_beta[t + 1])[None, :], axis=1)
    return log_beta


def forward_log(model: HmmModel, obs) -> ForwardResult:
    ll, log_alpha = _forward(model.emission_log_likelihoods(obs), model.log_pi, model.log_A)
    return ForwardResult(ll, log_alpha)


def backward_log(model: HmmModel, obs) -> np.ndarray:
    return _backward(model.emission_log_likelihoods(obs), model.log_A)


def viterbi(model: HmmModel, obs) -> ViterbiResult:
    """Most probable state path; ties go to the lowest state index."""
    log_b = model.emission_log_likelihoods(obs)
    T, S = log_b.shape
    delta = model.log_pi + log_b[0]
    back = np.zeros((T, S), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + model.log_A
        # np.argmax returns the first maximum, i.e. the lowest predecessor index
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(S)] + log_b[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return ViterbiResult(float(delta[path[-1]]), path)


def _allowed_transitions(n_states: int, topology: str) -> np.ndarray:
    if topology == "ergodic":
        return np.ones((n_states, n_states), dtype=bool)
    i, j = np.indices((n_states, n_states))
    return (j >= i) & (j <= i + LEFT_TO_RIGHT_MAX_JUMP)


def uniform_topology(n_states: int, topology: str):
    """Initial and transition log-probabilities uniform over allowed moves.

    Left-to-right models always start in state 0.
    """
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}")
    allowed = _allowed_transitions(n_states, topology)
    A = allowed / allowed.sum(axis=1, keepdims=True)
    if topology == "left_to_right":
        pi = np.zeros(n_states)
        pi[0] = 1.0
    else:
        pi = np.full(n_states, 1.0 / n_states)
    return _log(pi), _log(A)


def init_model(
    n_states: int,
    sequences: Sequence,
    topology: str = "left_to_right",
    emission: str = "gaussian",
    seed: int = 0,
    n_symbols: int | None = None,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    jitter: float = 0.1,
) -> HmmModel:
    """Starting point for Baum-Welch.

    Gaussian states take the pooled statistics of a uniform segmentation of
    every sequence. Discrete emission rows are uniform plus seeded jitter.
    """
    if n_states < 1:
        raise ValueError("need at least one state")
    if emission not in EMISSION_KINDS:
        raise ValueError(f"unknown emission kind {emission!r}")
    seqs = [np.asarray(getattr(s, "rows", s)) for s in sequences]
    if not seqs:
        raise HmmError("need at least one training sequence")
    for k, s in enumerate(seqs):
        if len(s) == 0:
            raise HmmError(f"sequence {k} is empty")
        if topology == "left_to_right" and len(s) < n_states:
            raise HmmError(
                f"sequence {k} has {len(s)} observations, fewer than {n_states} states"
            )
    log_pi, log_A = uniform_topology(n_states, topology)

    if emission == "discrete":
        V = n_symbols if n_symbols is not None else int(max(s.max() for s in seqs)) + 1
        rng = np.random.default_rng(seed)
        B = np.full((n_states, V), 1.0 / V) + rng.uniform(0, jitter / V, size=(n_states, V))
        B /= B.sum(axis=1, keepdims=True)
        return HmmModel(log_pi, log_A, DiscreteEmission(_log(B)), topology)

    seqs = [np.asarray(s, dtype=np.float64) for s in seqs]
    if any(s.ndim != 2 for s in seqs) or len({s.shape[1] for s in seqs}) != 1:
        raise HmmError("continuous sequences must be T x D arrays with one common D")
    pooled = np.vstack(seqs)
    chunks = [[] for _ in range(n_states)]
    for s in seqs:
        for state, part in enumerate(np.array_split(s, n_states)):
            if len(part):
                chunks[state].append(part)
    means = np.empty((n_states, pooled.shape[1]))
    variances = np.empty_like(means)
    for state, parts in enumerate(chunks):
        data = np.vstack(parts) if parts else pooled
        means[state] = data.mean(axis=0)
        variances[state] = data.var(axis=0)
    variances = np.maximum(variances, variance_floor)
    return HmmModel(log_pi, log_A, GaussianEmission(means, variances, variance_floor), topology)


@dataclass(frozen=True)
class TrainingResult:
    model: HmmModel
    log_likelihood_trace: list
    n_iter: int
    converged: bool
    frozen_states: list = field(default_factory=list)


@dataclass
class _Stats:
    log_likelihood: float
    gamma0: np.ndarray
    xi: np.ndarray
    gammas: list


def _e_step(model: HmmModel, sequences) -> _Stats:
    S = model.n_states
    total = 0.0
    gamma0 = np.zeros(S)
    xi = np.zeros((S, S))
    gammas = []
    for obs in sequences:
        log_b = model.emission_log_likelihoods(obs)
        ll, log_alpha = _forward(log_b, model.log_pi, model.log_A)
        if not np.isfinite(ll):
            raise HmmError("training sequence has zero probability under the model")
        log_beta = _backward(log_b, model.log_A)
        gamma = np.exp(log_alpha + log_beta - ll)
        gammas.append(gamma)
        gamma0 += gamma[0]
        if len(log_b) > 1:
            log_xi = (
                log_alpha[:-1, :, None]
                + model.log_A[None]
                + (log_b[1:] + log_beta[1:])[:, None, :]
                - ll
            )
            xi += np.exp(log_xi).sum(axis=0)
        total += ll
    return _Stats(total, gamma0, xi, gammas)


def _m_step(model: HmmModel, sequences, stats: _Stats):
    S = model.n_states
    occupancy = sum(g.sum(axis=0) for g in stats.gammas)
    frozen = [int(s) for s in np.flatnonzero(occupancy < _MIN_OCCUPANCY)]
    active = occupancy >= _MIN_OCCUPANCY

    log_pi = _log(stats.gamma0 / stats.gamma0.sum())

    A = model.A.copy()
    row_sums = stats.xi.sum(axis=1)
    for i in range(S):
        if row_sums[i] >= _MIN_OCCUPANCY and active[i]:
            A[i] = stats.xi[i] / row_sums[i]
    log_A = _log(A)
    # keep structural zeros exact
    log_A[np.isneginf(model.log_A)] = -np.inf

    em = model.emission
    if isinstance(em, DiscreteEmission):
        counts = np.zeros((S, em.n_symbols))
        for obs, g in zip(sequences, stats.gammas):
            sym = em.check(obs)
            for s in range(S):
                counts[s] += np.bincount(sym, weights=g[:, s], minlength=em.n_symbols)
        log_B = em.log_B.copy()
        log_B[active] = _log(counts[active] / counts[active].sum(axis=1, keepdims=True))
        new_em = DiscreteEmission(log_B)
    else:
        xs = [em.check(obs) for obs in sequences]
        weighted = sum(g.T @ x for x, g in zip(xs, stats.gammas))
        means = em.means.copy()
        means[active] = weighted[active] / occupancy[active, None]
        sq = np.zeros_like(means)
        for x, g in zip(xs, stats.gammas):
            for s in np.flatnonzero(active):
                sq[s] += g[:, s] @ (x - means[s]) ** 2
        variances = em.variances.copy()
        variances[active] = np.maximum(sq[active] / occupancy[active, None], em.variance_floor)
        new_em = GaussianEmission(means, variances, em.variance_floor)
    return HmmModel(log_pi, log_A, new_em, model.topology), frozen


def baum_welch(model: HmmModel, sequences, max_iters: int = 20, tol: float = 1e-4) -> TrainingResult:
    """EM re-estimation pooled over all sequences.

    ``log_likelihood_trace[k]`` is the total log-likelihood of the model after
    ``k`` updates. Training stops once an update gains less than ``tol`` or
    after ``max_iters`` updates.
    """
    sequences = list(sequences)
    if not sequences:
        raise HmmError("need at least one training sequence")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    trace = []
    frozen_all: set[int] = set()
    n_iter = 0
    converged = False
    stats = _e_step(model, sequences)
    trace.append(stats.log_likelihood)
    while n_iter < max_iters:
        model, frozen = _m_step(model, sequences, stats)
        n_iter += 1
        if frozen:
            frozen_all.update(frozen)
            warnings.warn(
                f"states {frozen} have zero posterior occupancy; their parameters were held fixed",
                RuntimeWarning,
                stacklevel=2,
            )
        stats = _e_step(model, sequences)
        trace.append(stats.log_likelihood)
        if trace[-1] - trace[-2] < tol:
            converged = True
            break
    return TrainingResult(model, trace, n_iter, converged, sorted(frozen_all))


def model_to_dict(model: HmmModel) -> dict:
    """Plain structure with linear-domain probabilities."""
    d = {
        "n_states": model.n_states,
        "topology": model.topology,
        "pi": model.pi.tolist(),
        "A": model.A.tolist(),
    }
    em = model.emission
    if isinstance(em, DiscreteEmission):
        d["emission"] = {"kind": "discrete", "n_symbols": em.n_symbols, "B": np.exp(em.log_B).tolist()}
    else:
        d["emission"] = {
            "kind": "gaussian",
            "dim": em.dim,
            "variance_floor": em.variance_floor,
            "means": em.means.tolist(),
            "variances": em.variances.tolist(),
        }
    return d


def model_from_dict(d: dict) -> HmmModel:
    try:
        em = d["emission"]
        if em["kind"] == "discrete":
            emission = DiscreteEmission(_log(em["B"]))
        elif em["kind"] == "gaussian":
            emission = GaussianEmission(em["means"], em["variances"], em["variance_floor"])
        else:
            raise HmmError(f"unknown emission kind {em['kind']!r}")
        model = HmmModel(_log(d["pi"]), _log(d["A"]), emission, d["topology"])
    except (KeyError, TypeError) as exc:
        raise HmmError(f"malformed model document: {exc!r}") from exc
    if model.n_states != d["n_states"]:
        raise HmmError("n_states field disagrees with parameter shapes")
    return model


def dumps_model(model: HmmModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def save_model(path, model: HmmModel) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> HmmModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise HmmError(f"corrupt model file {path}: {exc}") from exc
    return model_from_dict(d)


__all__ = [
    "DiscreteEmission",
    "GaussianEmission",
    "HmmModel",
    "HmmError",
    "ForwardResult",
    "ViterbiResult",
    "TrainingResult",
    "logsumexp",
    "gaussian_log_pdf",
    "forward_log",
    "backward_log",
    "viterbi",
    "init_model",
    "baum_welch",
    "uniform_topology",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "dumps_model",
]
