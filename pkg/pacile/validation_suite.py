"""
Deterministic numerical experiments that exercise the bounds and the
relaxations, each producing a table and a list of pass/fail checks.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence
import logging
import math

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from pacile.certificates import exp_identity_bound, penalty_epsilon, penalty_epsilon_prime
from pacile.config import settings
from pacile.errors import ConfigError
from pacile.gaussian_posterior import (
    PriorConfig,
    gaussian_kl,
    kl_gaussian_full,
    kl_unit_parametrization,
)
from pacile.optimizers import LossFn, RegressionProblem, absolute_losses, quadratic_losses
from pacile.rng import as_stream
from pacile.storage import digest_files, write_frame, write_json
from pacile.utils import generate_report_filename

logger = logging.getLogger(__name__)


class Check(BaseModel):
    """One asserted property of an experiment"""
    name: str = Field(..., description="What was asserted")
    passed: bool
    detail: str = ""


@dataclass
class ExperimentResult:
    name: str
    frame: pd.DataFrame
    checks: List[Check]
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _check(name: str, passed, detail: str = "") -> Check:
    return Check(name=name, passed=bool(passed), detail=detail)


# ========== Relaxation gap ==========

def run_relaxation_gap(
    seed: int,
    sigmas: Sequence[float] = (0.0, 0.01, 0.03, 0.1, 0.3, 1.0),
    dim_y: int = 13,
    dim_x: int = 5,
    mc_samples: int = 100_000,
) -> ExperimentResult:
    """
    E||y - V x|| for V ~ N(W, sigma^2 I) against sqrt(sigma^2 dim_y ||x||^2 + ||y - W x||^2).

    V x is distributed as W x + sigma ||x|| z with z ~ N(0, I_dim_y), which is
    how the left side is sampled.
    """
    stream = as_stream(seed).child("relaxation-gap")
    rng = stream.generator(0)
    w = rng.standard_normal((dim_y, dim_x))
    x = rng.standard_normal(dim_x)
    y = rng.standard_normal(dim_y)
    residual = y - w @ x
    residual_sq = float(residual @ residual)
    x_norm = float(np.linalg.norm(x))

    rows = []
    for k, sigma in enumerate(sigmas):
        rhs = math.sqrt(sigma ** 2 * dim_y * x_norm ** 2 + residual_sq)
        if sigma == 0:
            lhs, se = math.sqrt(residual_sq), 0.0
        else:
            z = stream.generator(k + 1).standard_normal((mc_samples, dim_y))
            norms = np.linalg.norm(residual - sigma * x_norm * z, axis=1)
            lhs, se = float(norms.mean()), float(norms.std(ddof=1) / math.sqrt(mc_samples))
        rows.append({"sigma": sigma, "lhs_mc": lhs, "lhs_se": se, "rhs": rhs, "rel_gap": (rhs - lhs) / rhs})
    frame = pd.DataFrame(rows)

    checks = [
        _check(
            "lhs <= rhs + 3 se",
            np.all(frame["lhs_mc"] <= frame["rhs"] + 3 * frame["lhs_se"]),
            f"worst margin {float((frame['rhs'] + 3 * frame['lhs_se'] - frame['lhs_mc']).min()):.3g}",
        ),
        _check("max rel_gap <= 0.15", frame["rel_gap"].max() <= 0.15, f"max rel_gap {frame['rel_gap'].max():.4f}"),
    ]
    zero = frame[frame["sigma"] == 0]
    if not zero.empty:
        checks.append(_check("rel_gap = 0 at sigma = 0", np.all(zero["rel_gap"] == 0.0)))
    config = {"sigmas": list(sigmas), "dim_y": dim_y, "dim_x": dim_x, "mc_samples": mc_samples}
    return ExperimentResult("relaxation_gap", frame, checks, config)


# ========== L / B correlation ==========

def _correlation_problem(rng: np.random.Generator, m: int, dim_x: int, dim_h: int, noise: float) -> RegressionProblem:
    features = rng.standard_normal((m, dim_x))
    w0 = rng.standard_normal((dim_h, dim_x))
    targets = features @ w0.T + noise * rng.standard_normal((m, dim_h))
    return RegressionProblem(features, targets)


def run_correlation_study(
    seed: int,
    sizes: Sequence[int] = (10, 100, 1000),
    n_experiments: int = 100,
    mc_samples: int = 500,
    dim_x: int = 5,
    dim_h: int = 13,
    posterior_std: float = 0.1,
    noise: float = 0.1,
    baseline_fn: Optional[LossFn] = None,
) -> ExperimentResult:
    """
    Pearson correlation of L(V) and B(V) over mc_samples draws V ~ N(0, posterior_std^2 I),
    averaged over independent experiments. Each experiment draws features
    x ~ N(0, I), a ground-truth W0 ~ N(0, I) and targets W0 x + noise.
    """
    baseline_fn = baseline_fn or quadratic_losses
    stream = as_stream(seed).child("correlation")
    rows = []
    for m in sizes:
        sub = stream.child(f"m={m}")
        correlations = np.empty(n_experiments)
        for e in range(n_experiments):
            rng = sub.generator(e)
            problem = _correlation_problem(rng, m, dim_x, dim_h, noise)
            batch = posterior_std * rng.standard_normal((mc_samples, dim_h, dim_x))
            correlations[e] = np.corrcoef(absolute_losses(batch, problem), baseline_fn(batch, problem))[0, 1]
        rows.append({"m": m, "mean_corr": float(correlations.mean()), "corr_std": float(correlations.std(ddof=1))})
        logger.debug(f"Correlation study m={m}: mean {rows[-1]['mean_corr']:.4f}")
    frame = pd.DataFrame(rows)

    largest = frame.loc[frame["m"].idxmax()]
    checks = [
        _check("mean_corr > 0 for every m", np.all(frame["mean_corr"] > 0)),
        _check(
            "mean_corr >= 0.5 at the largest m",
            largest["mean_corr"] >= 0.5,
            f"m={int(largest['m'])}: {largest['mean_corr']:.4f}",
        ),
    ]
    config = {
        "sizes": list(sizes),
        "n_experiments": n_experiments,
        "mc_samples": mc_samples,
        "dim_x": dim_x,
        "dim_h": dim_h,
        "posterior_std": posterior_std,
        "noise": noise,
        "recipe": "x ~ N(0, I); W0 ~ N(0, I); targets = W0 x + noise N(0, I); posterior mean 0",
    }
    return ExperimentResult("correlation", frame, checks, config)


# ========== Penalty curve ==========

def _epsilon_prime_slope(alpha: float, g_star_norm: float, n_params: int, exponents: Sequence[int]) -> float:
    log_m = np.array([k * math.log(10.0) for k in exponents])
    values = [
        penalty_epsilon_prime(PriorConfig(alpha=alpha, t=0.5, kappa=1.0, m=10 ** k), g_star_norm, n_params)
        for k in exponents
    ]
    return float(np.polyfit(log_m, np.log(values), 1)[0])


def _unimodal(values: np.ndarray) -> bool:
    k = int(np.argmin(values))
    steps = np.diff(values)
    return bool(np.all(steps[:k] <= 0) and np.all(steps[k:] >= 0))


def run_penalty_curve(
    seed: int = 0,
    n_params: int = 100,
    m: int = 10_000,
    alpha: float = 0.3,
    g_star_norm: float = 10.0,
    kappas: Sequence[float] = (0.5, 1.0, 2.0),
    ts: Optional[Sequence[float]] = None,
    slope_alphas: Sequence[float] = (0.3, 0.5, 0.7),
    slope_exponents: Sequence[int] = tuple(range(20, 31)),
) -> ExperimentResult:
    """
    epsilon'(t) per kappa; each curve should have one interior minimum.

    The decay rate in m is fitted far out (m = 10^20 ... 10^30, t = 1/2,
    kappa = 1) where the log m factor of the alpha < 1/2 branch is flat enough.
    """
    ts = np.arange(1, 1000) / 1000.0 if ts is None else np.asarray(ts, dtype=float)
    rows = []
    checks = []
    argmins = []
    worst_dual = 0.0
    for kappa in kappas:
        values = np.empty(ts.size)
        for i, t in enumerate(ts):
            prior = PriorConfig(alpha=alpha, t=float(t), kappa=kappa, m=m)
            values[i] = penalty_epsilon_prime(prior, g_star_norm, n_params)
            regrouped = (
                kl_unit_parametrization(prior, g_star_norm ** 2, n_params) / prior.m_alpha
                + penalty_epsilon(prior, g_star_norm, n_params)
            )
            worst_dual = max(worst_dual, abs(values[i] - regrouped) / max(abs(regrouped), 1.0))
            rows.append({"kappa": kappa, "t": float(t), "epsilon_prime": values[i]})
        k = int(np.argmin(values))
        argmins.append(float(ts[k]))
        checks.append(_check(f"unimodal in t (kappa={kappa:g})", _unimodal(values)))
        checks.append(_check(f"interior minimum (kappa={kappa:g})", 0 < k < ts.size - 1, f"argmin t={ts[k]:.3f}"))

    checks.append(_check("argmin moves with kappa", np.all(np.diff(argmins) > 0), f"argmins {argmins}"))
    checks.append(_check("epsilon' = K_U / m^alpha + epsilon", worst_dual <= 1e-9, f"max rel diff {worst_dual:.2e}"))

    for slope_alpha in slope_alphas:
        slope = _epsilon_prime_slope(slope_alpha, g_star_norm, n_params, slope_exponents)
        rate = min(slope_alpha, 1.0 - slope_alpha)
        checks.append(
            _check(
                f"log-log slope in m is -min(alpha, 1 - alpha) (alpha={slope_alpha:g})",
                abs(slope + rate) <= 0.1 * rate,
                f"slope {slope:.4f}, rate {rate:g}",
            )
        )
    config = {
        "n_params": n_params,
        "m": m,
        "alpha": alpha,
        "g_star_norm": g_star_norm,
        "kappas": list(kappas),
        "slope_alphas": list(slope_alphas),
        "slope_m": [f"1e{k}" for k in slope_exponents],
    }
    return ExperimentResult("penalty_curve", pd.DataFrame(rows), checks, config)


# ========== KL curve ==========

def run_kl_curve(
    seed: int = 0,
    sigmas: Optional[Sequence[float]] = None,
    n_params: int = 10,
    mean_value: float = 0.5,
) -> ExperimentResult:
    """KL(N(mu, sigma^2 I) || N(0, I)) over sigma for a fixed mu != 0"""
    if sigmas is None:
        sigmas = np.unique(np.append(np.round(np.geomspace(0.05, 5.0, 199), 12), 1.0))
    sigmas = np.asarray(sigmas, dtype=float)
    mu = np.full(n_params, mean_value)
    mean_norm_sq = float(mu @ mu)
    identity = np.eye(n_params)

    rows = []
    worst = 0.0
    for sigma in sigmas:
        kl = gaussian_kl(mean_norm_sq, n_params, sigma ** 2, 1.0)
        full = kl_gaussian_full(mu, sigma ** 2 * identity, np.zeros(n_params), identity)
        worst = max(worst, abs(kl - full) / max(abs(full), 1.0))
        rows.append({"sigma": float(sigma), "kl": kl, "kl_full": full})
    frame = pd.DataFrame(rows)

    k = int(frame["kl"].idxmin())
    checks = [
        _check("interior global minimum", 0 < k < len(frame) - 1, f"argmin sigma={frame['sigma'][k]:.4g}"),
        _check("minimum at sigma = 1", frame["sigma"][k] == 1.0),
        _check("isotropic KL matches full-covariance KL", worst <= 1e-10, f"max rel diff {worst:.2e}"),
        _check("KL(N(0, I) || N(0, I)) = 0", gaussian_kl(0.0, n_params, 1.0, 1.0) == 0.0),
    ]
    config = {"n_params": n_params, "mean_value": mean_value, "prior_variance": 1.0}
    return ExperimentResult("kl_curve", frame, checks, config)


# ========== Exponential identity bound ==========

def run_exp_identity_curves(
    seed: int,
    a_grid: Sequence[float] = (1.01, 1.5, 2.0, 5.0),
    n_points: int = 101,
    n_random: int = 1_000_000,
) -> ExperimentResult:
    """(a e / (e - 1))(1 - exp(-x / a)) on [0, 1] per a, plus a random domination check"""
    xs = np.linspace(0.0, 1.0, n_points)
    frames = [pd.DataFrame({"a": a, "x": xs, "bound": exp_identity_bound(xs, a)}) for a in a_grid]
    frame = pd.concat(frames, ignore_index=True)

    rng = as_stream(seed).child("exp-identity").generator(0)
    x_random = rng.random(n_random)
    a_random = 1.0 + 9.0 * (1.0 - rng.random(n_random))
    violations = int(np.sum(_bounds(x_random, a_random) < x_random))

    checks = [
        _check("curves dominate the identity", np.all(frame["bound"] >= frame["x"])),
        _check("bound(0) = 0", np.all(frame.loc[frame["x"] == 0.0, "bound"] == 0.0)),
        _check(f"no violations on {n_random} random (x, a)", violations == 0, f"{violations} violations"),
    ]
    config = {"a_grid": list(a_grid), "n_points": n_points, "n_random": n_random}
    return ExperimentResult("exp_identity", frame, checks, config)


def _bounds(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    return a * math.e / (math.e - 1.0) * -np.expm1(-x / a)


# ========== Suite ==========

EXPERIMENTS: Dict[str, Callable[[int], ExperimentResult]] = {
    "relaxation_gap": run_relaxation_gap,
    "correlation": run_correlation_study,
    "penalty_curve": run_penalty_curve,
    "kl_curve": run_kl_curve,
    "exp_identity": run_exp_identity_curves,
}


def resolve_names(names: Optional[Sequence[str]]) -> List[str]:
    if not names or list(names) == ["all"]:
        return list(EXPERIMENTS)
    unknown = [n for n in names if n not in EXPERIMENTS]
    if unknown:
        raise ConfigError(f"unknown experiments {unknown}; available: {', '.join(EXPERIMENTS)}")
    return list(names)


def run_all(
    out_dir: Path,
    seed: int,
    threads: int = 1,
    names: Optional[Sequence[str]] = None,
) -> List[ExperimentResult]:
    """Run experiments, write `<experiment>_<seed>.csv` files and manifest.json"""
    selected = resolve_names(names)
    out_dir = Path(out_dir)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda name: EXPERIMENTS[name](seed), selected))

    entries = []
    for result in results:
        path = write_frame(out_dir / generate_report_filename(result.name, seed), result.frame)
        entries.append(
            {
                "name": result.name,
                "file": path.name,
                "sha256": digest_files([path])[path.name],
                "config": result.config,
                "checks": [c.model_dump() for c in result.checks],
                "passed": result.passed,
            }
        )
        status = "passed" if result.passed else "FAILED"
        logger.info(f"Experiment {result.name} {status} ({sum(c.passed for c in result.checks)}/{len(result.checks)} checks)")

    write_json(
        out_dir / "manifest.json",
        {
            "command": "validate",
            "version": settings.VERSION,
            "seed": seed,
            "experiments": entries,
            "passed": all(e["passed"] for e in entries),
        },
    )
    return results
