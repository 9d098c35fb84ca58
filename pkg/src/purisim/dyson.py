"""Low-rank eigenvalue diffusion for measured states.

For a state of rank d << N, one measurement step moves the eigenvalue
vector by a drift plus correlated noise:

    mu_a     = sum_{b != a} lambda_a lambda_b / (lambda_a - lambda_b)
    Sigma_ab = lambda_a lambda_b (delta_ab - lambda_a - lambda_b + S),
    S        = sum_a lambda_a^2

per unit time dt = 1/N.  The drift annihilates the all-ones direction and
Sigma . 1 = 0, so the sum of eigenvalues is conserved.  An Euler-Maruyama
integrator with a symmetric PSD factorization of Sigma evolves walker
ensembles; ``microscopic_comparison`` checks the ensemble against direct
low-rank trajectories of the measurement process itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manybody import FactorState, factor_step
from .rng import RngStream

__all__ = [
    "DEGENERACY_GAP",
    "DegenerateSpectrum",
    "CovarianceNotPSD",
    "validate_spectrum",
    "generator_coefficients",
    "generator_quadratic_form",
    "apply_generator_to_purity",
    "euler_maruyama_step",
    "SdeEnsemble",
    "run_sde_ensemble",
    "run_microscopic_ensemble",
    "microscopic_comparison",
]

DEGENERACY_GAP = 1e-8
PERTURB_SPLIT = 1e-7
PSD_CLIP_FLOOR = -1e-12
POSITIVITY_CLIP = -1e-9
MAX_CLIPPED_FRACTION = 1e-3


class DegenerateSpectrum(ValueError):
    """Drift evaluation at a (near-)degenerate spectrum; caller must perturb."""


class CovarianceNotPSD(RuntimeError):
    """Sigma had an eigenvalue below the -1e-12 round-off window."""


def validate_spectrum(lam: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise ValueError("spectrum must be a nonempty 1-d array")
    if abs(lam.sum() - 1.0) > tol:
        raise ValueError(f"eigenvalues must sum to 1, got {lam.sum()}")
    if lam.min() < -tol:
        raise ValueError(f"negative eigenvalue {lam.min()}")
    return lam


def min_gap(lam: np.ndarray) -> float:
    if lam.size < 2:
        return np.inf
    srt = np.sort(lam)
    return float(np.min(np.diff(srt)))


def generator_coefficients(lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(drift mu, diffusion Sigma) at the given spectrum.

    Raises DegenerateSpectrum when the minimum gap is below 1e-8.
    """
    lam = validate_spectrum(lam)
    if min_gap(lam) < DEGENERACY_GAP:
        raise DegenerateSpectrum(f"minimum gap {min_gap(lam):.3e} < {DEGENERACY_GAP}")
    d = lam.size
    diff = lam[:, None] - lam[None, :]
    np.fill_diagonal(diff, 1.0)
    pair = lam[:, None] * lam[None, :] / diff
    np.fill_diagonal(pair, 0.0)
    mu = pair.sum(axis=1)
    s = float(np.sum(lam**2))
    sigma = np.outer(lam, lam) * (np.eye(d) - lam[:, None] - lam[None, :] + s)
    return mu, sigma


def generator_quadratic_form(
    lam: np.ndarray, grad: np.ndarray, hess: np.ndarray
) -> float:
    """Apply the generator to a function with the given derivatives at lam."""
    mu, sigma = generator_coefficients(lam)
    return float(mu @ grad + 0.5 * np.sum(hess * sigma))


def apply_generator_to_purity(lam: np.ndarray) -> float:
    """Generator applied to F = sum lambda^2, in closed form.

    Equals (sum lam)^2 - sum lam^2 + S - 2 sum lam^3 + S^2 with S = sum lam^2;
    regular even at degenerate spectra because the pair singularities cancel.
    """
    lam = np.asarray(lam, dtype=float)
    s1 = lam.sum()
    s2 = float(np.sum(lam**2))
    s3 = float(np.sum(lam**3))
    return s1**2 - s2 + s2 - 2.0 * s3 + s2**2


def _perturb_degenerate(lam: np.ndarray) -> tuple[np.ndarray, bool]:
    """Split near-degenerate pairs by +-1e-7 (sum preserved)."""
    lam = lam.copy()
    perturbed = False
    order = np.argsort(lam)
    srt = lam[order]
    for i in range(srt.size - 1):
        if srt[i + 1] - srt[i] < DEGENERACY_GAP:
            srt[i] -= PERTURB_SPLIT
            srt[i + 1] += PERTURB_SPLIT
            perturbed = True
    if perturbed:
        lam[order] = srt
    return lam, perturbed


def _pair_drift_displacement(lam: np.ndarray, dt: float) -> np.ndarray:
    """Drift displacement over dt with the pair repulsion integrated exactly.

    Each (a, b) pair's repulsion q/gap (q = lam_a lam_b) integrates over a
    step to a gap change gap -> sqrt(gap^2 + 4 q dt), i.e. a displacement
    (sqrt(gap^2 + 4 q dt) - gap)/2 per member.  This reduces to the Euler
    term q dt / gap once gap^2 >> q dt, and stays bounded at degeneracy,
    where the raw Euler drift diverges and overshoots by orders of
    magnitude.
    """
    diff = lam[..., :, None] - lam[..., None, :]
    q = lam[..., :, None] * lam[..., None, :]
    absdiff = np.abs(diff)
    disp = 0.5 * (np.sqrt(absdiff**2 + 4.0 * np.clip(q, 0.0, None) * dt) - absdiff)
    signed = np.where(diff >= 0, disp, -disp)
    d = lam.shape[-1]
    signed[..., range(d), range(d)] = 0.0
    return signed.sum(axis=-1)


def euler_maruyama_step(
    lam: np.ndarray, dt: float, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """One Euler-Maruyama step: drift displacement plus L xi sqrt(dt),
    L L^T = Sigma.

    Exactly degenerate pairs are first split by +-1e-7 (fixing which member
    moves up), and the level-repulsion drift uses the per-pair integrated
    displacement, which matches mu dt away from degeneracy and cannot
    overshoot at small gaps.  Sigma eigenvalues in [-1e-12, 0) are clipped
    to zero; anything lower raises CovarianceNotPSD.  The output is
    renormalized to sum 1 and clipped at -1e-9 as a safety net.
    """
    if dt <= 0:
        raise ValueError(f"need dt > 0, got {dt}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    lam = validate_spectrum(lam)
    lam_eval, _ = _perturb_degenerate(lam)
    s = float(np.sum(lam_eval**2))
    d = lam_eval.size
    sigma = np.outer(lam_eval, lam_eval) * (
        np.eye(d) - lam_eval[:, None] - lam_eval[None, :] + s
    )
    lam_new = (
        lam_eval
        + _pair_drift_displacement(lam_eval, dt)
        + _noise_factor(sigma, lam_eval) @ gen.standard_normal(d) * np.sqrt(dt)
    )
    lam_new = np.clip(lam_new, POSITIVITY_CLIP, None)
    return lam_new / lam_new.sum()


def _noise_factor(sigma: np.ndarray, lam: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(sigma)
    if w.min() < PSD_CLIP_FLOOR:
        raise CovarianceNotPSD(
            f"Sigma eigenvalue {w.min():.3e} below {PSD_CLIP_FLOOR} at spectrum {lam}"
        )
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------


@dataclass
class SdeEnsemble:
    """Walker ensemble summary: per-recorded-step eigenvalue and purity stats."""

    d: int
    dt: float
    steps: int
    walkers: int
    seed: int
    mean_purity: np.ndarray = field(default_factory=lambda: np.empty(0))
    stderr_purity: np.ndarray = field(default_factory=lambda: np.empty(0))
    mean_sorted_eigs: np.ndarray = field(default_factory=lambda: np.empty(0))
    second_moment_eigs: np.ndarray = field(default_factory=lambda: np.empty(0))
    clipped_steps: int = 0
    perturbed_steps: int = 0
    walkers_hit_degeneracy: int = 0  # walkers that ever needed the split
    min_gap_seen: float = np.inf
    final_spectra: np.ndarray = field(default_factory=lambda: np.empty(0))
    walker_spectra: np.ndarray | None = None  # (steps+1, walkers, d) if kept


def run_sde_ensemble(
    initial: np.ndarray,
    dt: float,
    steps: int,
    walkers: int,
    seed: int,
    stream_index: int = 0,
    keep_walker_series: bool = False,
) -> SdeEnsemble:
    """Vectorized Euler-Maruyama over independent walkers.

    Fails if more than 0.1% of walker-steps needed positivity clipping.
    """
    lam0 = validate_spectrum(np.asarray(initial, dtype=float))
    d = lam0.size
    gen = RngStream(seed, stream_index).generator()
    lam = np.tile(lam0, (walkers, 1))
    out = SdeEnsemble(d=d, dt=dt, steps=steps, walkers=walkers, seed=seed)
    mean_p, se_p, mean_e, second_e = [], [], [], []
    series = []
    sqrt_dt = np.sqrt(dt)

    def record():
        pur = np.sum(lam**2, axis=1)
        mean_p.append(pur.mean())
        se_p.append(pur.std(ddof=1) / np.sqrt(walkers))
        srt = np.sort(lam, axis=1)[:, ::-1]
        mean_e.append(srt.mean(axis=0))
        second_e.append((srt**2).mean(axis=0))
        if keep_walker_series:
            series.append(srt.copy())

    record()
    eye = np.eye(d)
    ever_tight = np.zeros(walkers, dtype=bool)
    for _ in range(steps):
        # split near-degenerate neighbors, vectorized over walkers
        srt_idx = np.argsort(lam, axis=1)
        srt = np.take_along_axis(lam, srt_idx, axis=1)
        gaps = np.diff(srt, axis=1)
        tight = gaps < DEGENERACY_GAP
        if np.any(tight):
            hit = tight.any(axis=1)
            out.perturbed_steps += int(hit.sum())
            ever_tight |= hit
            adj = np.zeros_like(srt)
            adj[:, :-1] -= PERTURB_SPLIT * tight
            adj[:, 1:] += PERTURB_SPLIT * tight
            srt = srt + adj
            np.put_along_axis(lam, srt_idx, srt, axis=1)
        out.min_gap_seen = min(out.min_gap_seen, float(gaps.min()) if gaps.size else np.inf)

        drift = _pair_drift_displacement(lam, dt)
        s = np.sum(lam**2, axis=1)[:, None, None]
        sigma = (
            lam[:, :, None]
            * lam[:, None, :]
            * (eye[None] - lam[:, :, None] - lam[:, None, :] + s)
        )
        w, v = np.linalg.eigh(sigma)
        if w.min() < PSD_CLIP_FLOOR:
            raise CovarianceNotPSD(f"Sigma eigenvalue {w.min():.3e}")
        w = np.clip(w, 0.0, None)
        xi = gen.standard_normal((walkers, d))
        noise = np.einsum("wij,wj,wj->wi", v, np.sqrt(w), xi)
        lam = lam + drift + sqrt_dt * noise
        clipped = lam < POSITIVITY_CLIP
        out.clipped_steps += int(clipped.any(axis=1).sum())
        lam = np.clip(lam, POSITIVITY_CLIP, None)
        lam = lam / lam.sum(axis=1, keepdims=True)
        record()

    if out.clipped_steps > MAX_CLIPPED_FRACTION * walkers * steps:
        raise RuntimeError(
            f"{out.clipped_steps} clipped walker-steps out of {walkers * steps}: "
            "step size too coarse for this spectrum"
        )
    out.mean_purity = np.array(mean_p)
    out.stderr_purity = np.array(se_p)
    out.mean_sorted_eigs = np.array(mean_e)
    out.second_moment_eigs = np.array(second_e)
    out.final_spectra = lam
    out.walkers_hit_degeneracy = int(ever_tight.sum())
    if keep_walker_series:
        out.walker_spectra = np.array(series)
    return out


def run_microscopic_ensemble(
    n: int,
    initial: np.ndarray,
    steps: int,
    walkers: int,
    seed: int,
    mode: str = "measurement",
) -> SdeEnsemble:
    """Direct low-rank measurement trajectories, summarized like the SDE.

    Walker ensembles use per-walker substreams, so results are independent
    of how walkers are scheduled.
    """
    lam0 = validate_spectrum(np.asarray(initial, dtype=float))
    d = lam0.size
    out = SdeEnsemble(d=d, dt=1.0 / n, steps=steps, walkers=walkers, seed=seed)
    purities = np.empty((walkers, steps + 1))
    eigs = np.empty((walkers, steps + 1, d))
    base = RngStream(seed)
    for w in range(walkers):
        gen = base.substream(w).generator()
        state = FactorState.from_spectrum(n, lam0)
        purities[w, 0] = state.purity()
        eigs[w, 0] = np.sort(np.linalg.eigvalsh(state.gram()))[::-1]
        for t in range(1, steps + 1):
            state, _ = factor_step(state, gen, mode)
            purities[w, t] = state.purity()
            ww = np.linalg.eigvalsh(state.gram())
            eigs[w, t] = np.sort(ww / ww.sum())[::-1]
    out.mean_purity = purities.mean(axis=0)
    out.stderr_purity = purities.std(axis=0, ddof=1) / np.sqrt(walkers)
    out.mean_sorted_eigs = eigs.mean(axis=0)
    out.second_moment_eigs = (eigs**2).mean(axis=0)
    out.final_spectra = eigs[:, -1, :]
    return out


def microscopic_comparison(
    d: int,
    n: int,
    steps: int,
    walkers: int,
    seed: int,
    initial: np.ndarray | None = None,
) -> dict:
    """Run SDE and direct ensembles from a rank-d flat start and compare.

    Returns per-recorded-step mean purities of both routes plus the maximum
    relative deviation over steps, and eigenvalue first/second moments.
    """
    if d > 8:
        raise ValueError(f"need d <= 8, got {d}")
    if n < 100 * d:
        raise ValueError(f"need N >= 100 d, got N={n}, d={d}")
    lam0 = np.full(d, 1.0 / d) if initial is None else np.asarray(initial, float)
    sde = run_sde_ensemble(lam0, 1.0 / n, steps, walkers, seed, stream_index=1)
    micro = run_microscopic_ensemble(n, lam0, steps, walkers, seed)
    rel = np.abs(sde.mean_purity - micro.mean_purity) / micro.mean_purity
    return {
        "d": d,
        "N": n,
        "steps": steps,
        "walkers": walkers,
        "sde_mean_purity": sde.mean_purity,
        "micro_mean_purity": micro.mean_purity,
        "max_rel_purity_dev": float(rel.max()),
        "sde_mean_eigs": sde.mean_sorted_eigs,
        "micro_mean_eigs": micro.mean_sorted_eigs,
        "sde_second_moments": sde.second_moment_eigs,
        "micro_second_moments": micro.second_moment_eigs,
        "sum_conservation_ok": bool(
            np.max(np.abs(sde.final_spectra.sum(axis=1) - 1.0)) < 1e-9
        ),
    }
