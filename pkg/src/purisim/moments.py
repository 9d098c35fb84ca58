"""Closed-form purity moments under Haar rank-N/2 measurements, with
Monte Carlo estimators to verify them.

The analytic forms are leading order in 1/N:

    post-selected mean   t2 + (1/N) (1 - 4 t3 + 3 t2^2)
    measured mean        t2 + (1/N) (1 - 2 t3 + t2^2)
    noise (both cases)   (4/N) (t4 - 2 t3 t2 + t2^3)
    E[delta^2]           t2 / (4N),   delta = tr(P rho) - 1/2

with tk = tr rho^k.  Estimators draw Haar projectors in batches; since the
projector law is unitarily invariant, sampling is done in the eigenbasis of
rho.  Samples of post-selected statistics with tr(P rho) below 1e-12 are
counted and excluded; more than 0.1% of them is an error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .randmat import haar_isometry_batch, haar_special_orthogonal_batch
from .rng import RngStream

__all__ = [
    "TraceProfile",
    "McEstimate",
    "analytic_postselected_mean",
    "analytic_measured_mean",
    "analytic_noise",
    "analytic_delta_sq",
    "mc_purity_statistic",
    "mc_measurement_noise",
    "mc_m_covariance",
    "so_commutant_solver",
    "so_quartic_exact",
    "so_quartic_moments",
    "nearly_pure_noise_bound_check",
    "STATISTICS",
]

EXCLUSION_EPS = 1e-12
MAX_EXCLUDED_FRACTION = 1e-3

STATISTICS = (
    "postselected",
    "measured",
    "postselected_second_moment",
    "measured_second_moment",
    "delta",
    "delta_sq",
    "pp_trace",
)


@dataclass(frozen=True)
class TraceProfile:
    """(tr rho^2, tr rho^3, tr rho^4) of a state."""

    t2: float
    t3: float
    t4: float

    @classmethod
    def from_density_matrix(cls, rho: np.ndarray) -> "TraceProfile":
        w = np.linalg.eigvalsh(rho)
        return cls(
            t2=float(np.sum(w**2)), t3=float(np.sum(w**3)), t4=float(np.sum(w**4))
        )

    @classmethod
    def from_spectrum(cls, lam: np.ndarray) -> "TraceProfile":
        lam = np.asarray(lam, dtype=float)
        return cls(
            t2=float(np.sum(lam**2)),
            t3=float(np.sum(lam**3)),
            t4=float(np.sum(lam**4)),
        )

    def check_schatten(self, tol: float = 1e-12) -> bool:
        """Schatten p-norm monotonicity: t3 <= t2^(3/2), t4 <= t2^2."""
        return self.t3 <= self.t2**1.5 + tol and self.t4 <= self.t2**2 + tol


@dataclass(frozen=True)
class McEstimate:
    mean: float
    standard_error: float
    samples: int
    excluded: int = 0

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("need at least 2 samples for a standard error")


def analytic_postselected_mean(profile: TraceProfile, n: int) -> float:
    """Mean purity after postselecting the plus branch."""
    return profile.t2 + (1.0 - 4.0 * profile.t3 + 3.0 * profile.t2**2) / n


def analytic_measured_mean(profile: TraceProfile, n: int) -> float:
    """Mean purity after a Born-rule measurement (both branches weighted)."""
    return profile.t2 + (1.0 - 2.0 * profile.t3 + profile.t2**2) / n


def analytic_noise(profile: TraceProfile, n: int) -> float:
    """Variance of the updated purity; identical for both cases."""
    return 4.0 * (profile.t4 - 2.0 * profile.t3 * profile.t2 + profile.t2**3) / n


def analytic_delta_sq(profile: TraceProfile, n: int) -> float:
    """Leading-order E[(tr P rho - 1/2)^2] = tr(rho^2)/(4N)."""
    return profile.t2 / (4.0 * n)


# ---------------------------------------------------------------------------
# Monte Carlo estimators
# ---------------------------------------------------------------------------


def _trace_stat_samples(
    rho: np.ndarray,
    n: int,
    samples: int,
    rng: RngStream | np.random.Generator,
    chunk: int = 2048,
):
    """Yield per-sample (t, s, u) arrays over Haar rank-N/2 projectors.

    t = tr(P rho), s = tr(P rho P rho), u = tr(P rho^2), computed in the
    eigenbasis of rho (Haar invariance of the projector law).
    """
    lam = np.linalg.eigvalsh(rho)
    r = n // 2
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    done = 0
    while done < samples:
        take = min(chunk, samples - done)
        v = haar_isometry_batch(n, r, take, gen)
        vl = v.conj() * lam[np.newaxis, :, np.newaxis]
        b = np.einsum("sni,snj->sij", vl, v)
        t = np.real(np.einsum("sii->s", b))
        s = np.real(np.einsum("sij,sji->s", b, b))
        u = np.einsum("sni,n,sni->s", v.conj(), lam**2, v).real
        done += take
        yield t, s, u


def _estimate(values: np.ndarray, excluded: int = 0) -> McEstimate:
    return McEstimate(
        mean=float(values.mean()),
        standard_error=float(values.std(ddof=1) / np.sqrt(values.size)),
        samples=int(values.size),
        excluded=excluded,
    )


def mc_purity_statistic(
    rho: np.ndarray,
    n: int,
    statistic: str,
    samples: int,
    rng: RngStream | np.random.Generator,
) -> McEstimate:
    """Monte Carlo mean +- stderr of a purity-update trace statistic.

    ``measured`` variants weight both measurement branches by their Born
    probabilities.  Requires samples >= 100 and even N.
    """
    if statistic not in STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}; one of {STATISTICS}")
    if samples < 100:
        raise ValueError(f"need samples >= 100, got {samples}")
    if n % 2 != 0:
        raise ValueError(f"need even N, got {n}")
    t2 = float(np.real(np.vdot(rho, rho)))
    vals = []
    excluded = 0
    for t, s, u in _trace_stat_samples(rho, n, samples, rng):
        sc = t2 - 2.0 * u + s  # tr((I-P) rho (I-P) rho)
        tc = 1.0 - t
        if statistic in ("postselected", "postselected_second_moment"):
            keep = t > EXCLUSION_EPS
            excluded += int(np.sum(~keep))
            t, s = t[keep], s[keep]
            if statistic == "postselected":
                vals.append(s / t**2)
            else:
                vals.append(s**2 / t**4)
        elif statistic == "measured":
            vals.append(_both_branches(s, t, sc, tc, power=1))
        elif statistic == "measured_second_moment":
            vals.append(_both_branches(s, t, sc, tc, power=2))
        elif statistic == "delta":
            vals.append(t - 0.5)
        elif statistic == "delta_sq":
            vals.append((t - 0.5) ** 2)
        elif statistic == "pp_trace":
            vals.append(s)
    if excluded > MAX_EXCLUDED_FRACTION * samples:
        raise RuntimeError(
            f"{excluded} of {samples} samples had tr(P rho) < {EXCLUSION_EPS}"
        )
    return _estimate(np.concatenate(vals), excluded)


def _both_branches(s, t, sc, tc, power: int) -> np.ndarray:
    """Born-weighted sum t*(s/t^2)^k + tc*(sc/tc^2)^k with degenerate guards."""
    plus = np.where(t > EXCLUSION_EPS, s**power / np.maximum(t, EXCLUSION_EPS) ** (2 * power - 1), 0.0)
    minus = np.where(tc > EXCLUSION_EPS, sc**power / np.maximum(tc, EXCLUSION_EPS) ** (2 * power - 1), 0.0)
    return plus + minus


def mc_measurement_noise(
    rho: np.ndarray,
    n: int,
    mode: str,
    samples: int,
    rng: RngStream | np.random.Generator,
) -> tuple[McEstimate, float, float]:
    """Sample variance of the per-step updated purity, with its stderr.

    Simulates the actual branch draw in ``measurement`` mode; in
    ``postselection`` mode evaluates the plus branch.  Returns
    (estimate of the *mean* updated purity, sample variance,
    stderr of the variance estimator).
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    t2 = float(np.real(np.vdot(rho, rho)))
    purities = []
    excluded = 0
    for t, s, u in _trace_stat_samples(rho, n, samples, gen):
        if mode == "postselection":
            keep = t > EXCLUSION_EPS
            excluded += int(np.sum(~keep))
            purities.append(s[keep] / t[keep] ** 2)
        elif mode == "measurement":
            sc = t2 - 2.0 * u + s
            tc = 1.0 - t
            take_plus = gen.uniform(size=t.size) < t
            pur_plus = np.where(t > EXCLUSION_EPS, s / np.maximum(t, EXCLUSION_EPS) ** 2, 0.0)
            pur_minus = np.where(tc > EXCLUSION_EPS, sc / np.maximum(tc, EXCLUSION_EPS) ** 2, 0.0)
            purities.append(np.where(take_plus, pur_plus, pur_minus))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    if excluded > MAX_EXCLUDED_FRACTION * samples:
        raise RuntimeError(f"{excluded} excluded samples out of {samples}")
    vals = np.concatenate(purities)
    var = float(vals.var(ddof=1))
    # stderr of the variance via the fourth central moment
    m4 = float(np.mean((vals - vals.mean()) ** 4))
    var_se = float(np.sqrt(max(m4 - var**2, 0.0) / vals.size))
    return _estimate(vals, excluded), var, var_se


def mc_m_covariance(
    n: int, samples: int, rng: RngStream | np.random.Generator
) -> dict:
    """First/second moments of M = 2 U P0 U^H - I on a fixed index set.

    Checks the delta_ad delta_bc / N covariance pattern plus off-pattern
    controls.  The exact finite-N second moment is
    (N delta_ad delta_bc - delta_ab delta_cd) / (N^2 - 1).
    """
    if n < 4 or n % 2 != 0:
        raise ValueError(f"need even N >= 4, got {n}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    r = n // 2
    index_set = [
        (0, 1, 1, 0),  # pattern hit: expect ~ 1/N
        (1, 2, 2, 1),  # pattern hit
        (0, 1, 0, 1),  # off pattern: expect ~ 0
        (0, 0, 1, 1),  # off pattern with exact -1/(N^2-1)
    ]
    need = sorted({(a, b) for (a, b, c, d) in index_set for (a, b) in [(a, b), (c, d)]})
    sums = {k: 0.0 for k in index_set}
    sums_sq = {k: 0.0 for k in index_set}
    mean_entries = {k: 0.0 for k in need}
    mean_entries_sq = {k: 0.0 for k in need}
    done = 0
    chunk = 4096
    while done < samples:
        take = min(chunk, samples - done)
        v = haar_isometry_batch(n, r, take, gen)
        m_entries = {}
        for (a, b) in need:
            p_ab = np.einsum("si,si->s", v[:, a, :], v[:, b, :].conj())
            m_entries[(a, b)] = 2.0 * p_ab - (1.0 if a == b else 0.0)
        for key in index_set:
            a, b, c, d = key
            prod = np.real(m_entries[(a, b)] * m_entries[(c, d)])
            sums[key] += prod.sum()
            sums_sq[key] += (prod**2).sum()
        for k in need:
            vals = np.real(m_entries[k])
            mean_entries[k] += vals.sum()
            mean_entries_sq[k] += (vals**2).sum()
        done += take
    report = {"N": n, "samples": samples, "covariance": [], "first_moments": []}
    for key in index_set:
        a, b, c, d = key
        mean = sums[key] / samples
        var = sums_sq[key] / samples - mean**2
        se = np.sqrt(max(var, 0.0) / samples)
        leading = (1.0 / n) * (1.0 if (a == d and b == c) else 0.0)
        exact = (
            n * (1.0 if (a == d and b == c) else 0.0)
            - (1.0 if (a == b and c == d) else 0.0)
        ) / (n**2 - 1.0)
        report["covariance"].append(
            {
                "indices": key,
                "mc_mean": mean,
                "mc_stderr": se,
                "leading_order": leading,
                "exact": exact,
                "pass": abs(mean - leading) <= 3 * se + 4.0 / n**2,
            }
        )
    for k in need:
        mean = mean_entries[k] / samples
        var = mean_entries_sq[k] / samples - mean**2
        se = np.sqrt(max(var, 0.0) / samples)
        report["first_moments"].append(
            {"indices": k, "mc_mean": mean, "mc_stderr": se, "pass": abs(mean) <= 3 * se + 1e-12}
        )
    return report


# ---------------------------------------------------------------------------
# SO(2n) quartic moments
# ---------------------------------------------------------------------------


def so_commutant_solver(n: int, rhs: tuple[float, float, float]) -> tuple[float, float, float]:
    """Solve for (x, y, z) in E = x I + y S + z W on (R^2n)^{x2}.

    ``rhs`` holds (Tr E, Tr ES, Tr EW), which for the average
    E[O|a><b|O^T (x) O|c><d|O^T] equal (d_ab d_cd, d_ad d_cb, d_ac d_bd).
    """
    m = 2 * n
    if m < 3:
        raise ValueError("moment system requires 2n >= 3")
    mat = np.array([[m**2, m, m], [m, m**2, m], [m, m, m**2]], dtype=float)
    x, y, z = np.linalg.solve(mat, np.asarray(rhs, dtype=float))
    return float(x), float(y), float(z)


def so_quartic_exact(n: int) -> dict:
    """Exact quartic entry moments of Haar SO(2n) from the commutant solve.

    Keys: ``distinct_rows``  E[O_j1 O_j1 O_k2 O_k2], j != k
          ``cross``          E[O_j1 O_j2 O_k1 O_k2], j != k
          ``same_row``       E[O_j1 O_j1 O_j2 O_j2]
    """
    x1, y1, z1 = so_commutant_solver(n, (1.0, 0.0, 0.0))  # a=b=1, c=d=2
    x3, y3, z3 = so_commutant_solver(n, (0.0, 0.0, 1.0))  # a=c=1, b=d=2
    return {
        "distinct_rows": x1,
        "cross": x3,
        "same_row": x1 + y1 + z1,
        "coefficients": {"diag_pattern": (x1, y1, z1), "cross_pattern": (x3, y3, z3)},
    }


def so_build_commutant_operator(n: int, a: int, b: int, c: int, d: int) -> np.ndarray:
    """Dense x I + y S + z W for E[O|a><b|O^T (x) O|c><d|O^T] on C^{(2n)^2}."""
    m = 2 * n
    rhs = (
        float(a == b) * float(c == d),
        float(a == d) * float(c == b),
        float(a == c) * float(b == d),
    )
    x, y, z = so_commutant_solver(n, rhs)
    eye = np.eye(m * m)
    swap = np.zeros((m * m, m * m))
    w = np.zeros((m * m, m * m))
    idx = np.arange(m * m).reshape(m, m)
    swap[idx.T.ravel(), idx.ravel()] = 1.0
    diag = idx.diagonal()
    w[np.ix_(diag, diag)] = 1.0
    return x * eye + y * swap + z * w


def so_quartic_moments(
    n: int, samples: int, rng: RngStream | np.random.Generator
) -> dict:
    """Exact-vs-Monte-Carlo report for the three quartic SO(2n) moments.

    The MC estimator averages each moment over all index choices related by
    row exchangeability (same expectation, lower variance).
    """
    if n < 4:
        raise ValueError(f"need n >= 4, got {n}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    m = 2 * n
    exact = so_quartic_exact(n)
    leading = {
        "distinct_rows": 1.0 / (4 * n**2),
        "cross": -1.0 / (8 * n**3),
        "same_row": 1.0 / (4 * n**2) - 1.0 / (4 * n**3),
    }
    acc = {k: [] for k in ("distinct_rows", "cross", "same_row")}
    done = 0
    chunk = 512
    while done < samples:
        take = min(chunk, samples - done)
        o = haar_special_orthogonal_batch(m, take, gen)
        col1_sq = o[:, :, 0] ** 2
        col2_sq = o[:, :, 1] ** 2
        prod12 = o[:, :, 0] * o[:, :, 1]
        # distinct rows: mean over j != k of O_j1^2 O_k2^2
        s1 = col1_sq.sum(axis=1)
        s2 = col2_sq.sum(axis=1)
        diag_jj = (col1_sq * col2_sq).sum(axis=1)
        acc["distinct_rows"].append((s1 * s2 - diag_jj) / (m * (m - 1)))
        # cross: mean over j != k of O_j1 O_j2 O_k1 O_k2
        sp = prod12.sum(axis=1)
        acc["cross"].append((sp**2 - (prod12**2).sum(axis=1)) / (m * (m - 1)))
        # same row: mean over j of O_j1^2 O_j2^2
        acc["same_row"].append(diag_jj / m)
        done += take
    report = {"n": n, "samples": samples, "moments": {}}
    for key in acc:
        vals = np.concatenate(acc[key])
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(vals.size))
        report["moments"][key] = {
            "mc_mean": mean,
            "mc_stderr": se,
            "exact": exact[key],
            "leading_order": leading[key],
            "pass_exact": abs(mean - exact[key]) <= 3 * se,
            "pass_leading": abs(mean - leading[key]) <= 3 * se + 4.0 / n**4,
        }
    return report


# ---------------------------------------------------------------------------
# Nearly pure noise bound
# ---------------------------------------------------------------------------


def nearly_pure_noise_bound_check(
    epsilon: float,
    n: int,
    trials: int,
    rng: RngStream | np.random.Generator,
    slack_coeff: float = 2.0,
) -> dict:
    """Check analytic_noise <= (4/N)(eps^2 + slack_coeff * eps^3) on random
    nearly pure spectra with tr rho^2 = 1 - eps exactly.

    Spectra have one large eigenvalue 1 - eta and a random simplex tail.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"need 0 < epsilon < 1/2, got {epsilon}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    bound = 4.0 * (epsilon**2 + slack_coeff * epsilon**3) / n
    worst = -np.inf
    failures = 0
    for _ in range(trials):
        w = gen.dirichlet(np.ones(n - 1))
        s2 = float(np.sum(w**2))
        # solve (1-eta)^2 + eta^2 s2 = 1 - epsilon for the smaller root
        disc = 1.0 - (1.0 + s2) * epsilon
        if disc < 0:
            failures += 1
            continue
        eta = (1.0 - np.sqrt(disc)) / (1.0 + s2)
        lam = np.concatenate(([1.0 - eta], eta * w))
        profile = TraceProfile.from_spectrum(lam)
        noise = analytic_noise(profile, n)
        worst = max(worst, noise)
        if noise > bound:
            failures += 1
    return {
        "epsilon": epsilon,
        "N": n,
        "trials": trials,
        "bound": bound,
        "worst_noise": worst,
        "failures": failures,
        "pass": failures == 0,
    }
