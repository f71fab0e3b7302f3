"""Homogeneous-data null models and Monte-Carlo significance tests.

The p-value uses the add-one estimator ``(#{t*_l >= t} + 1) / (M + 1)``
(mirrored for statistics where lower is better). Replicate seeds are derived
from the master seed and the replicate index, so results do not depend on how
many workers evaluate them.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import indices
from .cluster import apply_method
from .core import ClusteringMethod, FeatureDataset
from .errors import ClusterValError, ReplicateFailedError, UnsupportedModeError
from .indices import HIGHER, LOWER
from .split import SplitPair, split_inferential
from .transfer import default_rule, transfer

log = logging.getLogger(__name__)

NULL_KINDS = ("uniform_range", "gaussian_moments")
NULL_ALIASES = {"uniform": "uniform_range", "gaussian": "gaussian_moments"}

CAVEAT = ("A small p-value says the data are unlike the fitted homogeneous null model; "
          "this can also stem from structure the null model does not represent "
          "(e.g. dependence between observations), not only from clusters.")

STABILITY_WARN_M = 200


@dataclass(frozen=True, eq=False)
class NullModel:
    kind: str
    shape: tuple
    variable_ids: tuple
    low: Optional[np.ndarray] = None
    high: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None
    cov: Optional[np.ndarray] = None
    ridge: float = 0.0

    @property
    def flags(self) -> tuple:
        return (f"ridge {self.ridge:.3g} added to singular covariance",) if self.ridge else ()

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "shape": list(self.shape), "flags": list(self.flags)}
        if self.kind == "uniform_range":
            out["low"], out["high"] = self.low.tolist(), self.high.tolist()
        else:
            out["mean"], out["cov"] = self.mean.tolist(), self.cov.tolist()
        return out


def _kind(kind: str) -> str:
    kind = NULL_ALIASES.get(kind, kind)
    if kind not in NULL_KINDS:
        raise UnsupportedModeError(f"unknown null model {kind!r}")
    return kind


def fit_null(data: FeatureDataset, kind: str = "uniform_range") -> NullModel:
    """Fit a homogeneous null model to feature data."""
    if not isinstance(data, FeatureDataset):
        raise UnsupportedModeError("null models are defined on feature data only")
    kind = _kind(kind)
    x = data.values
    shape = x.shape
    if kind == "uniform_range":
        return NullModel(kind, shape, data.variable_ids, low=x.min(axis=0), high=x.max(axis=0))
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    ridge = 0.0
    if np.linalg.matrix_rank(cov) < cov.shape[0]:
        ridge = 1e-8 * float(np.trace(cov)) / cov.shape[0]
        if ridge == 0.0:
            ridge = 1e-8
        cov = cov + ridge * np.eye(cov.shape[0])
    return NullModel(kind, shape, data.variable_ids, mean=mean, cov=cov, ridge=ridge)


def simulate(model: NullModel, seed, n: Optional[int] = None) -> FeatureDataset:
    """Draw one dataset (``n`` rows, default the source's) from ``model``."""
    rng = np.random.default_rng(seed)
    n = model.shape[0] if n is None else n
    p = model.shape[1]
    if model.kind == "uniform_range":
        x = model.low + (model.high - model.low) * rng.random((n, p))
    else:
        chol = np.linalg.cholesky(model.cov)
        x = model.mean + rng.standard_normal((n, p)) @ chol.T
    return FeatureDataset(x, [f"null{i + 1}" for i in range(n)], model.variable_ids)


OBSERVED_KEY = 2**32


def replicate_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(index,))


def mc_p_value(t: float, t_null, direction: str = HIGHER) -> float:
    """Add-one Monte-Carlo p-value; ties count as exceedances."""
    t_null = np.asarray(t_null, dtype=float)
    if direction == HIGHER:
        exceed = int(np.sum(t_null >= t))
    elif direction == LOWER:
        exceed = int(np.sum(t_null <= t))
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return (exceed + 1) / (t_null.size + 1)


@dataclass(frozen=True)
class MonteCarloResult:
    t_observed: float
    t_null: tuple
    M: int
    p_value: float
    statistic_name: str
    direction: str
    null_kind: str = ""
    seed: Optional[int] = None
    flags: tuple = ()
    caveat: str = CAVEAT

    def to_dict(self) -> dict:
        return {
            "statistic_name": self.statistic_name,
            "direction": self.direction,
            "t_observed": self.t_observed,
            "t_null": list(self.t_null),
            "M": self.M,
            "p_value": self.p_value,
            "null_kind": self.null_kind,
            "seed": self.seed,
            "flags": list(self.flags),
            "caveat": self.caveat,
        }


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class Statistic:
    """A named statistic computed from a dataset by clustering it with a method.

    ``compute(data, method, seed)`` returns a float; ``seed`` feeds any
    randomness the statistic itself needs (e.g. the split inside stability).
    """

    name: str
    direction: str
    compute: Callable[[FeatureDataset, ClusteringMethod, np.random.SeedSequence], float]
    expensive: bool = False


def _index_statistic(name):
    def compute(data, method, seed):
        model = apply_method(data, method)
        return indices.internal_index(name, data, model.partition).value

    return Statistic(name, indices.INDEX_DIRECTIONS[name], compute)


def stability_ari(pair: SplitPair, method: ClusteringMethod) -> float:
    """ARI between the method rerun on validation data and the transferred
    discovery clustering."""
    m1 = apply_method(pair.discovery, method)
    c2tf = transfer(m1, pair, default_rule(method, pair.mode))
    c2md = apply_method(pair.validation, method).partition
    return indices.adjusted_rand(c2md, c2tf).value


def _stability_compute(data, method, seed):
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    split_seed = int(seed.generate_state(1, dtype=np.uint64)[0])
    return stability_ari(split_inferential(data, 0.5, split_seed), method)


STATISTICS = {name: _index_statistic(name) for name in indices.INTERNAL_INDICES}
STATISTICS["stability"] = Statistic("stability", HIGHER, _stability_compute, expensive=True)


def get_statistic(statistic) -> Statistic:
    if isinstance(statistic, Statistic):
        return statistic
    try:
        return STATISTICS[statistic]
    except KeyError:
        raise ClusterValError(f"unknown statistic {statistic!r}; choose from {sorted(STATISTICS)}")


def _run_replicates(fn, M, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, range(M)))
    return [fn(i) for i in range(M)]


def _collect(results, M):
    failed = [(i, err) for i, (ok, err) in enumerate(results) if not ok]
    if failed:
        i, err = failed[0]
        raise ReplicateFailedError(
            f"{len(failed)} of {M} null replicates failed (first: replicate {i}: {err}); "
            "the Monte-Carlo test is aborted rather than run with fewer replicates"
        )
    return tuple(float(v) for _, v in results)


def _guard(fn):
    def run(i):
        try:
            return True, fn(i)
        except ClusterValError as exc:
            return False, str(exc)
    return run


def monte_carlo_test(data: FeatureDataset, method: ClusteringMethod, statistic="asw",
                     model_kind: str = "uniform_range", M: int = 99, seed: int = 0,
                     workers: int = 1) -> MonteCarloResult:
    """Test whether ``method`` finds more structure in ``data`` than in
    homogeneous data simulated from a null model fitted to it."""
    if M < 1:
        raise ClusterValError("M must be at least 1")
    stat = get_statistic(statistic)
    if stat.expensive and M > STABILITY_WARN_M:
        warnings.warn(f"{stat.name} reclusters every replicate; M={M} may be slow")
    null = fit_null(data, model_kind)
    t = float(stat.compute(data, method, replicate_seed(seed, OBSERVED_KEY)))

    def one(i):
        ss = replicate_seed(seed, i)
        sim_seed, stat_seed = ss.spawn(2)
        return stat.compute(simulate(null, sim_seed), method, stat_seed)

    t_null = _collect(_run_replicates(_guard(one), M, workers), M)
    return MonteCarloResult(t, t_null, M, mc_p_value(t, t_null, stat.direction),
                            stat.name, stat.direction, null.kind, seed, null.flags)


# ---------------------------------------------------------------------------
# null reference for discovery-vs-validation comparisons

REFERENCE_STATISTICS = ("ari_md_tf",) + tuple(f"tf_{n}" for n in indices.INTERNAL_INDICES)


def reference_statistic(name: str, pair: SplitPair, method: ClusteringMethod) -> float:
    """Comparison statistic on a split pair.

    ``ari_md_tf`` is the ARI between the method rerun on the validation data
    and the transferred clustering; ``tf_<index>`` is an internal index of the
    transferred clustering on the validation data.
    """
    if name == "ari_md_tf":
        return stability_ari(pair, method)
    if name.startswith("tf_") and name[3:] in indices.INTERNAL_INDICES:
        m1 = apply_method(pair.discovery, method)
        c2tf = transfer(m1, pair, default_rule(method, pair.mode))
        return indices.internal_index(name[3:], pair.validation, c2tf).value
    raise ClusterValError(f"unknown reference statistic {name!r}; "
                          f"choose from {list(REFERENCE_STATISTICS)}")


def reference_direction(name: str) -> str:
    if name == "ari_md_tf":
        return HIGHER
    return indices.INDEX_DIRECTIONS[name[3:]]


def null_reference_validation(pair: SplitPair, method: ClusteringMethod,
                              statistic: str = "ari_md_tf",
                              model_kind: str = "uniform_range", M: int = 99, seed: int = 0,
                              fit_on: str = "validation", workers: int = 1) -> MonteCarloResult:
    """Compare a discovery-vs-validation statistic with its value on pairs of
    homogeneous datasets of the same shapes.

    ``fit_on`` is ``"validation"`` (null fitted on D2) or ``"both"`` (D1 and D2
    pooled).
    """
    if pair.mode != "inferential" or not isinstance(pair.discovery, FeatureDataset):
        raise UnsupportedModeError("null reference validation needs an inferential feature split")
    if M < 1:
        raise ClusterValError("M must be at least 1")
    direction = reference_direction(statistic)
    t = float(reference_statistic(statistic, pair, method))
    if fit_on == "both":
        d1, d2 = pair.discovery, pair.validation
        source = FeatureDataset(np.vstack([d1.values, d2.values]),
                                d1.object_ids + d2.object_ids, d1.variable_ids)
    elif fit_on == "validation":
        source = pair.validation
    else:
        raise ClusterValError(f"fit_on must be 'validation' or 'both', got {fit_on!r}")
    null = fit_null(source, model_kind)
    n1, n2 = pair.discovery.n_objects, pair.validation.n_objects

    def one(i):
        s1, s2 = replicate_seed(seed, i).spawn(2)
        a, b = simulate(null, s1, n1), simulate(null, s2, n2)
        b = FeatureDataset(b.values, [f"nullv{j + 1}" for j in range(n2)], b.variable_ids)
        return reference_statistic(statistic, SplitPair(a, b, "inferential", pair.ratio), method)

    t_null = _collect(_run_replicates(_guard(one), M, workers), M)
    return MonteCarloResult(t, t_null, M, mc_p_value(t, t_null, direction), statistic,
                            direction, null.kind, seed, null.flags)
